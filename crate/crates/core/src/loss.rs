//! Heatmap regression losses over the centre patch.
//!
//! Both losses are sums of squared residuals; the hourglass variant weights
//! each pixel by the ground-truth weight mask, which down-weights pixels that
//! carry the uninformative baseline value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, PatchRegion, WeightMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Hourglass,
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// ∂value/∂pred, zero outside the patch.
    pub gradient: Heatmap,
    pub n_pixels: usize,
}

fn check_shapes(pred: &Heatmap, gt: &Heatmap, weights: Option<&WeightMask>, patch: &PatchRegion) -> Result<()> {
    if !pred.same_shape(gt) || weights.is_some_and(|w| !w.same_shape(gt)) {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    if !patch.fits(gt.height, gt.width) {
        return Err(Error::Dimension(format!(
            "patch {:?} does not fit a {}x{} heatmap",
            patch.as_array(),
            gt.height,
            gt.width
        )));
    }
    Ok(())
}

fn weighted(pred: &Heatmap, gt: &Heatmap, weights: Option<&WeightMask>, patch: &PatchRegion) -> LossReport {
    let mut gradient = Heatmap::filled(gt.height, gt.width, 0.0);
    let mut value = 0.0;
    for row in patch.rows() {
        for col in patch.cols() {
            let i = row * gt.width + col;
            let w = weights.map_or(1.0, |m| m.data[i]);
            let r = pred.data[i] - gt.data[i];
            value += w * r * r;
            gradient.data[i] = 2.0 * w * r;
        }
    }
    LossReport {
        value,
        gradient,
        n_pixels: patch.n_pixels(),
    }
}

pub fn hourglass_loss(
    pred: &Heatmap,
    gt: &Heatmap,
    weights: &WeightMask,
    patch: &PatchRegion,
) -> Result<LossReport> {
    check_shapes(pred, gt, Some(weights), patch)?;
    Ok(weighted(pred, gt, Some(weights), patch))
}

pub fn mse_loss(pred: &Heatmap, gt: &Heatmap, patch: &PatchRegion) -> Result<LossReport> {
    check_shapes(pred, gt, None, patch)?;
    Ok(weighted(pred, gt, None, patch))
}

/// Compares the analytic gradient of `loss_fn` with central differences at
/// `n_probes` random pixels of `patch` and returns the largest relative error.
pub fn finite_diff_check(
    loss_fn: impl Fn(&Heatmap) -> Result<LossReport>,
    pred: &Heatmap,
    patch: &PatchRegion,
    epsilon: f64,
    n_probes: usize,
    seed: u64,
) -> Result<f64> {
    if !(epsilon > 1e-8 && epsilon < 1e-2) {
        return Err(Error::Config(format!("epsilon {epsilon} outside (1e-8, 1e-2)")));
    }
    let analytic = loss_fn(pred)?.gradient;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = pred.clone();
    let mut worst = 0.0f64;
    for _ in 0..n_probes {
        let row = rng.gen_range(patch.rows());
        let col = rng.gen_range(patch.cols());
        let i = row * pred.width + col;
        let x = pred.data[i];
        probe.data[i] = x + epsilon;
        let up = loss_fn(&probe)?.value;
        probe.data[i] = x - epsilon;
        let down = loss_fn(&probe)?.value;
        probe.data[i] = x;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic.data[i], numeric));
    }
    Ok(worst)
}

/// `|a − b| / max(|a|, |b|)`, with differences below 1e-10 treated as exact.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < 1e-10 {
        return 0.0;
    }
    diff / a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> Heatmap {
        Heatmap::filled(1, 1, v)
    }

    #[test]
    fn perfect_fit_is_zero() {
        let gt = Heatmap::filled(8, 8, 0.5);
        let w = Heatmap::filled(8, 8, 0.6);
        let r = hourglass_loss(&gt, &gt, &w, &PatchRegion::full(8, 8)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.data.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_pixel_examples() {
        let p = PatchRegion::full(1, 1);
        let r = hourglass_loss(&single(0.7), &single(0.5), &single(0.6), &p).unwrap();
        assert!((r.value - 0.024).abs() < 1e-15);
        let r = hourglass_loss(&single(0.7), &single(1.0), &single(1.0), &p).unwrap();
        assert!((r.value - 0.09).abs() < 1e-15);
        assert!((r.gradient.data[0] + 0.6).abs() < 1e-15);
        let r = mse_loss(&single(0.7), &single(1.0), &p).unwrap();
        assert!((r.value - 0.09).abs() < 1e-15);
    }

    #[test]
    fn outside_patch_ignored() {
        let gt = Heatmap::filled(8, 8, 0.5);
        let mut pred = gt.clone();
        pred.set(0, 0, 0.9);
        let patch = PatchRegion::centered(8, 8, 0.5);
        let r = mse_loss(&pred, &gt, &patch).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.n_pixels, 16);
    }

    #[test]
    fn shape_mismatch() {
        let a = Heatmap::filled(4, 4, 0.0);
        let b = Heatmap::filled(4, 5, 0.0);
        assert!(matches!(mse_loss(&a, &b, &PatchRegion::full(4, 4)), Err(Error::Dimension(_))));
    }
}

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{head_baseline, TRAJ_OUTPUTS};
use super::{Model, Real};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::heatmap::{Heatmap, PatchRegion, Pixel, WeightMask};
use crate::loss::{hourglass_loss, mse_loss, LossKind};
use crate::raster::BevRaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossKind,
    /// Divide the heatmap loss by the number of patch pixels.
    pub normalize_by_pixels: bool,
    pub heatmap_weight: f64,
    pub trajectory_weight: f64,
    /// Draw batches according to the per-record sampling weights.
    pub balance: bool,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossKind::Hourglass,
            normalize_by_pixels: true,
            heatmap_weight: 1.0,
            trajectory_weight: 1.0,
            balance: true,
            seed: 0,
            log_every: 100,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("lr must be non-negative and betas in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.heatmap_weight >= 0.0 && self.trajectory_weight >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub raster: BevRaster,
    pub gt: Heatmap,
    pub weights: WeightMask,
    pub patch: PatchRegion,
    pub goal: Pixel,
    /// Goal position in the rendering frame, meters.
    pub goal_local: Vec2,
    pub speed: f64,
    /// Encoded expert waypoints, see `encode_waypoints`.
    pub trajectory: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub total: f64,
    pub heatmap: f64,
    pub trajectory: f64,
}

impl StepStats {
    fn add(&mut self, o: &StepStats) {
        self.total += o.total;
        self.heatmap += o.heatmap;
        self.trajectory += o.trajectory;
    }

    fn scale(&mut self, s: f64) {
        self.total *= s;
        self.heatmap *= s;
        self.trajectory *= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.lr);
        let eps = T::of(self.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Loss of one sample; accumulates its gradient into `grads` when given.
pub fn sample_loss<T: Real>(
    model: &Model<T>,
    s: &TrainSample,
    cfg: &TrainConfig,
    grads: Option<&mut [T]>,
) -> Result<StepStats> {
    let fwd = model.forward(model.input_tensor(&s.raster)?)?;
    let pred = Heatmap {
        height: fwd.height,
        width: fwd.width,
        data: fwd.heatmap.iter().map(|v| v.f64()).collect(),
    };
    let report = match cfg.loss {
        LossKind::Hourglass => hourglass_loss(&pred, &s.gt, &s.weights, &s.patch)?,
        LossKind::Mse => mse_loss(&pred, &s.gt, &s.patch)?,
    };
    let hm_scale = cfg.heatmap_weight
        / if cfg.normalize_by_pixels {
            report.n_pixels as f64
        } else {
            1.0
        };
    let heatmap = report.value * hm_scale;

    if s.trajectory.len() != TRAJ_OUTPUTS {
        return Err(Error::Dimension(format!(
            "trajectory target has {} values, expected {TRAJ_OUTPUTS}",
            s.trajectory.len()
        )));
    }
    let head = model.head_forward(Model::head_input(s.goal_local, s.speed, &fwd.embedding));
    let n = TRAJ_OUTPUTS as f64;
    let mut trajectory = 0.0;
    let base = head_baseline(s.goal_local);
    let mut d_out = Vec::with_capacity(TRAJ_OUTPUTS);
    for ((o, t), b) in head.output.iter().zip(&s.trajectory).zip(&base) {
        let r = o.f64() - (*t as f64 - *b as f64);
        trajectory += r * r / n;
        d_out.push(T::of(2.0 * r / n * cfg.trajectory_weight));
    }
    let trajectory = trajectory * cfg.trajectory_weight;

    if let Some(grads) = grads {
        let d_emb = model.head_backward(&head, &d_out, grads);
        let d_heat: Vec<T> = report.gradient.data.iter().map(|g| T::of(g * hm_scale)).collect();
        model.backward(&fwd, &d_heat, &d_emb, grads);
    }
    Ok(StepStats {
        total: heatmap + trajectory,
        heatmap,
        trajectory,
    })
}

/// One Adam step on the batch mean loss. Per-sample gradients may be computed
/// in parallel; they are summed in batch order so results are reproducible.
pub fn train_step<T: Real>(
    batch: &[&TrainSample],
    model: &mut Model<T>,
    adam: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let n = model.n_params();
    let m: &Model<T> = model;
    let per_sample: Vec<Result<(StepStats, Vec<T>)>> = batch
        .par_iter()
        .map(|s| {
            let mut g = vec![T::zero(); n];
            sample_loss(m, s, cfg, Some(&mut g)).map(|st| (st, g))
        })
        .collect();
    let mut stats = StepStats::default();
    let mut grads = vec![T::zero(); n];
    for r in per_sample {
        let (st, g) = r?;
        stats.add(&st);
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    stats.scale(inv);
    if !stats.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericDivergence {
            step: adam.step + 1,
        });
    }
    let tinv = T::of(inv);
    grads.iter_mut().for_each(|g| *g *= tinv);
    adam.update(&mut model.params, &grads);
    Ok(stats)
}

/// Batch indices for `step`; a pure function of `(seed, step)` so training
/// can resume mid-run and reproduce the same sequence.
pub fn batch_indices(
    n_records: usize,
    weights: Option<&[f64]>,
    batch_size: usize,
    seed: u64,
    step: u64,
) -> Result<Vec<usize>> {
    if n_records == 0 {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    match weights {
        Some(w) => {
            let dist = WeightedIndex::new(w)
                .map_err(|e| Error::Config(format!("invalid sampling weights: {e}")))?;
            Ok((0..batch_size).map(|_| dist.sample(&mut rng)).collect())
        }
        None => {
            let dist = Uniform::new(0, n_records);
            Ok((0..batch_size).map(|_| dist.sample(&mut rng)).collect())
        }
    }
}

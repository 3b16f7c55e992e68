//! Training-time data shaping: turn-category rebalancing, rendering-orientation
//! noise, and start-pose perturbation of expert trajectories.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose, Vec2};
use crate::scenario::{Trajectory, TurnCategory};

/// Per-category sampling weights indexed by [`TurnCategory::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerWeights {
    pub weights: [f64; 3],
}

impl SamplerWeights {
    pub fn uniform() -> Self {
        SamplerWeights {
            weights: [1.0 / 3.0; 3],
        }
    }

    pub fn get(&self, c: TurnCategory) -> f64 {
        self.weights[c.index()]
    }

    /// Per-record weights for a corpus; records of a category share its weight,
    /// so a category's total mass is `count · weight`.
    pub fn record_weights(&self, categories: &[TurnCategory]) -> Vec<f64> {
        categories.iter().map(|c| self.get(*c)).collect()
    }
}

/// Inverse-frequency weights, normalized to sum to one.
pub fn balance_weights(counts: [usize; 3]) -> Result<SamplerWeights> {
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        return Err(Error::DegenerateCategory(format!(
            "category {:?} has no samples",
            TurnCategory::ALL[i]
        )));
    }
    let inv = counts.map(|c| 1.0 / c as f64);
    let total: f64 = inv.iter().sum();
    Ok(SamplerWeights {
        weights: inv.map(|w| w / total),
    })
}

pub const DEFAULT_ORIENTATION_NOISE: f64 = PI / 6.0;

/// Uniform draw from the open interval `(−half_range, half_range)`.
pub fn sample_orientation_noise<R: Rng + ?Sized>(rng: &mut R, half_range: f64) -> f64 {
    if half_range <= 0.0 {
        return 0.0;
    }
    let dist = Uniform::new(-half_range, half_range);
    loop {
        let v = dist.sample(rng);
        if v > -half_range {
            return v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub probability: f64,
    /// Largest start-position offset, meters.
    pub max_offset: f64,
    /// Largest start-yaw offset, radians.
    pub max_yaw: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            probability: 0.1,
            max_offset: 1.0,
            max_yaw: 0.2,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    /// Larger offsets used for out-of-distribution evaluation.
    pub fn ood() -> Self {
        PerturbConfig {
            probability: 1.0,
            max_offset: 3.0,
            max_yaw: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "perturbation probability {} outside [0, 1]",
                self.probability
            )));
        }
        if !(self.max_offset >= 0.0 && self.max_yaw >= 0.0) {
            return Err(Error::Config("perturbation bounds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Start-pose offset drawn within the configured bounds: a uniform point in
/// the disc of radius `max_offset` and a uniform yaw in `[−max_yaw, max_yaw]`.
pub fn sample_offset<R: Rng + ?Sized>(rng: &mut R, cfg: &PerturbConfig) -> Pose {
    let r = cfg.max_offset * rng.gen::<f64>().sqrt();
    let a = rng.gen_range(-PI..PI);
    let yaw = if cfg.max_yaw > 0.0 {
        rng.gen_range(-cfg.max_yaw..=cfg.max_yaw)
    } else {
        0.0
    };
    Pose {
        x: r * a.cos(),
        y: r * a.sin(),
        yaw,
    }
}

/// With probability `cfg.probability`, moves the first pose by a random
/// offset and re-fits the rest of the trajectory to the unchanged final pose.
pub fn perturb_trajectory<R: Rng + ?Sized>(
    traj: &Trajectory,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    if traj.len() < 3 {
        return Err(Error::Invariant(format!(
            "perturbation needs at least 3 poses, got {}",
            traj.len()
        )));
    }
    if cfg.probability <= 0.0 || rng.gen::<f64>() >= cfg.probability {
        return Ok(traj.clone());
    }
    let off = sample_offset(rng, cfg);
    Ok(reinterpolate(traj, off))
}

/// Shifts the first pose by `off` (world-frame position, additive yaw) and
/// blends a cubic Hermite curve from it to the fixed final pose. Interior
/// poses keep the original arc-length spacing; yaw follows the curve tangent.
pub fn reinterpolate(traj: &Trajectory, off: Pose) -> Trajectory {
    let n = traj.len();
    let first = traj.first();
    let last = *traj.last();
    let start = Pose::new(first.x + off.x, first.y + off.y, first.yaw + off.yaw);
    let p0 = start.position();
    let p1 = last.position();
    let chord = p0.dist(p1);

    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + traj.poses[i - 1].position().dist(traj.poses[i].position());
    }
    let total = cum[n - 1];

    let mut poses = Vec::with_capacity(n);
    poses.push(start);
    if chord < 1e-9 || total < 1e-9 {
        // Nothing to re-fit: hold the perturbed start, then land on the end.
        for _ in 1..n - 1 {
            poses.push(start);
        }
        poses.push(last);
        return Trajectory {
            poses,
            dt: traj.dt,
        };
    }

    let curve = Hermite {
        p0,
        p1,
        m0: start.heading() * chord,
        m1: last.heading() * chord,
    };
    let table = curve.arc_table(512);
    let curve_len = *table.last().unwrap();
    for c in &cum[1..n - 1] {
        let t = param_at(&table, c / total * curve_len);
        let p = curve.at(t);
        let d = curve.tangent(t);
        let yaw = if d.norm() > 1e-12 {
            d.y.atan2(d.x)
        } else {
            poses.last().map_or(start.yaw, |q: &Pose| q.yaw)
        };
        poses.push(Pose::new(p.x, p.y, yaw));
    }
    poses.push(last);
    Trajectory {
        poses,
        dt: traj.dt,
    }
}

struct Hermite {
    p0: Vec2,
    p1: Vec2,
    m0: Vec2,
    m1: Vec2,
}

impl Hermite {
    fn at(&self, t: f64) -> Vec2 {
        let t2 = t * t;
        let t3 = t2 * t;
        self.p0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + self.m0 * (t3 - 2.0 * t2 + t)
            + self.p1 * (-2.0 * t3 + 3.0 * t2)
            + self.m1 * (t3 - t2)
    }

    fn tangent(&self, t: f64) -> Vec2 {
        let t2 = t * t;
        self.p0 * (6.0 * t2 - 6.0 * t)
            + self.m0 * (3.0 * t2 - 4.0 * t + 1.0)
            + self.p1 * (-6.0 * t2 + 6.0 * t)
            + self.m1 * (3.0 * t2 - 2.0 * t)
    }

    /// Cumulative chord length at `steps + 1` uniform parameter values.
    fn arc_table(&self, steps: usize) -> Vec<f64> {
        let mut table = Vec::with_capacity(steps + 1);
        table.push(0.0);
        let mut prev = self.p0;
        for i in 1..=steps {
            let p = self.at(i as f64 / steps as f64);
            table.push(table[i - 1] + prev.dist(p));
            prev = p;
        }
        table
    }
}

fn param_at(table: &[f64], s: f64) -> f64 {
    let steps = table.len() - 1;
    let i = table.partition_point(|v| *v < s).clamp(1, steps);
    let (a, b) = (table[i - 1], table[i]);
    let frac = if b > a { ((s - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
    (i - 1) as f64 / steps as f64 + frac / steps as f64
}

/// Signed yaw change from `a` to `b`.
pub fn yaw_delta(a: &Pose, b: &Pose) -> f64 {
    normalize_angle(b.yaw - a.yaw)
}

//! Non-learned trajectory to a goal point: a constant-curvature arc from the
//! ego pose, traversed with a ramp-then-cruise speed profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2};
use crate::heatmap::Pixel;
use crate::raster::{make_transform, RasterConfig};
use crate::scenario::{Trajectory, FRAME_DT, HORIZON_FRAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicConfig {
    pub max_accel: f64,
    pub max_decel: f64,
    /// Largest admissible arc curvature, 1/m.
    pub max_curvature: f64,
    /// Goals closer than this are treated as "stay here".
    pub stop_radius: f64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        KinematicConfig {
            max_accel: 3.0,
            max_decel: 8.0,
            max_curvature: 0.3,
            stop_radius: 0.05,
        }
    }
}

/// Kinematic trajectory to the centre of `goal` in an unrotated raster, in
/// the ego frame.
pub fn kinematic_fallback(
    goal: Pixel,
    raster: &RasterConfig,
    speed: f64,
    cfg: &KinematicConfig,
) -> Result<Trajectory> {
    let tf = make_transform(&Pose::new(0.0, 0.0, 0.0), raster, 0.0);
    kinematic_fallback_to(tf.pixel_to_local(goal.center()), speed, cfg)
}

/// Kinematic trajectory to a goal given in the ego frame (x forward, y left).
/// Returns `HORIZON_FRAMES` poses at 0.1 s spacing, excluding the start.
pub fn kinematic_fallback_to(goal: Vec2, speed: f64, cfg: &KinematicConfig) -> Result<Trajectory> {
    let horizon = HORIZON_FRAMES as f64 * FRAME_DT;
    let v0 = speed.max(0.0);
    let d = goal.norm();
    if d < cfg.stop_radius {
        let s = SpeedProfile::stop(v0, 0.0, cfg.max_decel);
        return Ok(sample(|t| arc_pose(0.0, s.at(t))));
    }
    if goal.x <= 0.0 {
        return Err(Error::InfeasibleGoal(format!(
            "goal ({:.2}, {:.2}) is not ahead of the ego",
            goal.x, goal.y
        )));
    }
    let kappa = 2.0 * goal.y / (d * d);
    if kappa.abs() > cfg.max_curvature {
        return Err(Error::InfeasibleGoal(format!(
            "goal needs curvature {kappa:.3} above {:.3}",
            cfg.max_curvature
        )));
    }
    let length = if kappa.abs() < 1e-12 {
        goal.x
    } else {
        2.0 * goal.y.atan2(goal.x) / kappa
    };
    let s = SpeedProfile::reach(v0, length, horizon, cfg);
    Ok(sample(|t| arc_pose(kappa, s.at(t))))
}

fn sample(f: impl Fn(f64) -> Pose) -> Trajectory {
    let poses = (1..=HORIZON_FRAMES).map(|k| f(k as f64 * FRAME_DT)).collect();
    Trajectory::new(poses, FRAME_DT).expect("non-empty")
}

/// Evenly spaced poses along the circular arc that leaves the origin heading
/// +x and ends at `goal`, one per horizon step. Never fails; a goal at the
/// origin gives a stationary path.
pub fn goal_arc(goal: Vec2) -> Vec<Pose> {
    let d2 = goal.x * goal.x + goal.y * goal.y;
    let (kappa, length) = if d2 < 1e-18 {
        (0.0, 0.0)
    } else if goal.y.abs() < 1e-9 * d2.sqrt() {
        (0.0, goal.x)
    } else {
        let k = 2.0 * goal.y / d2;
        (k, 2.0 * goal.y.atan2(goal.x) / k)
    };
    (1..=HORIZON_FRAMES)
        .map(|k| arc_pose(kappa, length * k as f64 / HORIZON_FRAMES as f64))
        .collect()
}

/// Pose after arc length `s` along a circle of curvature `kappa` from the origin.
fn arc_pose(kappa: f64, s: f64) -> Pose {
    if kappa.abs() < 1e-12 {
        return Pose::new(s, 0.0, 0.0);
    }
    let th = kappa * s;
    Pose::new(th.sin() / kappa, (1.0 - th.cos()) / kappa, th)
}

/// Speed ramps at `rate` for `ramp` seconds, then holds (or stops at zero).
#[derive(Debug, Clone, Copy)]
struct SpeedProfile {
    v0: f64,
    rate: f64,
    ramp: f64,
}

impl SpeedProfile {
    /// Decelerate to a standstill after `distance` meters if the decel cap
    /// allows, otherwise brake at the cap.
    fn stop(v0: f64, distance: f64, max_decel: f64) -> Self {
        if v0 <= 0.0 {
            return SpeedProfile {
                v0: 0.0,
                rate: 0.0,
                ramp: 0.0,
            };
        }
        let needed = if distance > 0.0 {
            v0 * v0 / (2.0 * distance)
        } else {
            f64::INFINITY
        };
        let rate = -needed.min(max_decel);
        SpeedProfile {
            v0,
            rate,
            ramp: v0 / -rate,
        }
    }

    /// Covers `length` in `horizon` seconds with the gentlest ramp that fits
    /// under the caps; a constant-acceleration profile when possible.
    fn reach(v0: f64, length: f64, horizon: f64, cfg: &KinematicConfig) -> Self {
        let a = 2.0 * (length - v0 * horizon) / (horizon * horizon);
        if v0 + a * horizon < 0.0 {
            return SpeedProfile::stop(v0, length, cfg.max_decel);
        }
        if a >= 0.0 {
            if a <= cfg.max_accel {
                return SpeedProfile { v0, rate: a, ramp: horizon };
            }
            // Ramp at the cap for τ, then cruise: v0·T + r·τ·T − r·τ²/2 = L.
            let r = cfg.max_accel;
            let disc = horizon * horizon - 2.0 * (length - v0 * horizon) / r;
            let ramp = if disc >= 0.0 { horizon - disc.sqrt() } else { horizon };
            return SpeedProfile { v0, rate: r, ramp };
        }
        if -a <= cfg.max_decel {
            return SpeedProfile { v0, rate: a, ramp: horizon };
        }
        let r = cfg.max_decel;
        let disc = horizon * horizon - 2.0 * (v0 * horizon - length) / r;
        let ramp = if disc >= 0.0 { horizon - disc.sqrt() } else { horizon };
        let ramp = ramp.min(v0 / r);
        SpeedProfile { v0, rate: -r, ramp }
    }

    fn at(&self, t: f64) -> f64 {
        let tr = t.min(self.ramp);
        let s = self.v0 * tr + 0.5 * self.rate * tr * tr;
        let v_end = (self.v0 + self.rate * self.ramp).max(0.0);
        s + v_end * (t - tr).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn goal_arc_is_even_and_ends_at_goal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let g = Vec2::new(rng.gen_range(-5.0..30.0), rng.gen_range(-10.0..10.0));
            let a = goal_arc(g);
            assert_eq!(a.len(), HORIZON_FRAMES);
            assert!(a.last().unwrap().position().dist(g) < 1e-9);
            let chord = |p: &Pose, q: &Pose| p.position().dist(q.position());
            let first = chord(&Pose::new(0.0, 0.0, 0.0), &a[0]);
            for w in a.windows(2) {
                assert!((chord(&w[0], &w[1]) - first).abs() < 1e-9);
            }
        }
        assert!(goal_arc(Vec2::new(0.0, 0.0)).iter().all(|p| *p == Pose::new(0.0, 0.0, 0.0)));
    }

    #[test]
    fn straight_constant_speed() {
        let t = kinematic_fallback_to(Vec2::new(10.0, 0.0), 5.0, &KinematicConfig::default()).unwrap();
        assert_eq!(t.len(), 20);
        for (k, p) in t.poses.iter().enumerate() {
            assert!((p.x - 0.5 * (k + 1) as f64).abs() < 1e-9);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.yaw, 0.0);
        }
    }

    #[test]
    fn goal_at_ego_stops() {
        let cfg = KinematicConfig::default();
        let t = kinematic_fallback_to(Vec2::ZERO, 4.0, &cfg).unwrap();
        assert!(t.poses.iter().all(|p| p.yaw == 0.0 && p.y == 0.0));
        let last = t.last().x;
        assert!((last - 16.0 / (2.0 * cfg.max_decel)).abs() < 1e-9);
        assert_eq!(t.poses[18].x, t.poses[19].x);
        let still = kinematic_fallback_to(Vec2::ZERO, 0.0, &cfg).unwrap();
        assert!(still.poses.iter().all(|p| *p == Pose::new(0.0, 0.0, 0.0)));
    }

    #[test]
    fn endpoint_hits_feasible_goals() {
        let cfg = KinematicConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 100 {
            let v0 = rng.gen_range(0.0..8.0);
            let goal = Vec2::new(rng.gen_range(0.5..16.0), rng.gen_range(-4.0..4.0));
            let Ok(t) = kinematic_fallback_to(goal, v0, &cfg) else { continue };
            let d = goal.norm();
            let kappa = 2.0 * goal.y / (d * d);
            let length = if kappa.abs() < 1e-12 { goal.x } else { 2.0 * goal.y.atan2(goal.x) / kappa };
            // Reachable within the caps: the constant-acceleration estimate.
            let a = 2.0 * (length - 2.0 * v0) / 4.0;
            if a > cfg.max_accel || a < -cfg.max_decel || v0 + 2.0 * a < 0.0 {
                continue;
            }
            assert!(t.last().position().dist(goal) < 1e-6, "goal {goal:?} v0 {v0}");
            checked += 1;
        }
    }

    #[test]
    fn behind_is_infeasible() {
        let r = kinematic_fallback_to(Vec2::new(-3.0, 0.5), 2.0, &KinematicConfig::default());
        assert!(matches!(r, Err(Error::InfeasibleGoal(_))));
    }
}

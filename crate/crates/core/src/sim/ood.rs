use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{reinterpolate, sample_offset, PerturbConfig};
use crate::error::Result;
use crate::geometry::{OrientedBox, Pose};
use crate::scenario::{Scenario, Trajectory, FRAME_DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodConfig {
    /// Offset bounds for the ego pose at the start frame.
    pub ego: PerturbConfig,
    /// Largest change of the initial ego speed, m/s.
    pub max_speed_offset: f64,
    /// Largest constant longitudinal and lateral shift of each agent track, meters.
    pub agent_jitter: f64,
    /// Frame the perturbed ego starts from; must match the simulator.
    pub start_frame: usize,
    /// Frames after the start over which the ego log blends back to the original.
    pub blend_frames: usize,
    pub seed: u64,
}

impl Default for OodConfig {
    fn default() -> Self {
        OodConfig {
            ego: PerturbConfig::ood(),
            max_speed_offset: 2.0,
            agent_jitter: 0.5,
            start_frame: 5,
            blend_frames: 30,
            seed: 0,
        }
    }
}

impl OodConfig {
    pub fn validate(&self) -> Result<()> {
        self.ego.validate()?;
        if !(self.max_speed_offset >= 0.0 && self.agent_jitter >= 0.0) {
            return Err(crate::Error::Config("OOD magnitudes must be non-negative".into()));
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.ego.max_offset == 0.0
            && self.ego.max_yaw == 0.0
            && self.max_speed_offset == 0.0
            && self.agent_jitter == 0.0
    }
}

/// Perturbed copies of `scenarios`: the ego starts from an offset pose with a
/// different speed and the agent tracks are shifted. Copies where the
/// perturbation itself puts boxes in contact at frame 0 or at the start
/// frame, or puts the ego off the road, are dropped.
pub fn make_ood_suite(scenarios: &[Scenario], cfg: &OodConfig) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    if cfg.is_zero() {
        return Ok(scenarios.to_vec());
    }
    Ok(scenarios
        .iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ s.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rng.set_stream(s.category as u64);
            let p = perturb_scenario(s, cfg, &mut rng);
            realistic(&p, cfg.start_frame).then_some(p)
        })
        .collect())
}

fn perturb_scenario(s: &Scenario, cfg: &OodConfig, rng: &mut ChaCha8Rng) -> Scenario {
    let mut out = s.clone();
    let start = cfg.start_frame.min(s.n_frames - 1);
    let off = sample_offset(rng, &cfg.ego);
    let dv = if cfg.max_speed_offset > 0.0 {
        rng.gen_range(-cfg.max_speed_offset..=cfg.max_speed_offset)
    } else {
        0.0
    };

    let p0 = s.ego_pose(start);
    let new_start = Pose::new(p0.x + off.x, p0.y + off.y, p0.yaw + off.yaw);
    // History is carried rigidly with the start pose and time-scaled so the
    // implied initial speed changes by `dv`.
    let v0 = s.ego.speed_at(start);
    let scale = if v0 > 1e-6 { ((v0 + dv) / v0).max(0.0) } else { 1.0 };
    for f in 0..start {
        let rel = p0.relative(&s.ego_pose(f));
        out.ego.poses[f] = new_start.compose(&Pose::new(rel.x * scale, rel.y * scale, rel.yaw));
    }
    let end = (start + cfg.blend_frames).min(s.n_frames - 1);
    if end >= start + 2 {
        let seg = Trajectory {
            poses: s.ego.poses[start..=end].to_vec(),
            dt: FRAME_DT,
        };
        let blended = reinterpolate(&seg, off);
        out.ego.poses[start..=end].copy_from_slice(&blended.poses);
    } else {
        out.ego.poses[start] = new_start;
    }

    if cfg.agent_jitter > 0.0 {
        for a in &mut out.agents {
            let dl = rng.gen_range(-cfg.agent_jitter..=cfg.agent_jitter);
            let dy = rng.gen_range(-cfg.agent_jitter..=cfg.agent_jitter);
            for p in &mut a.poses {
                *p = p.compose(&Pose::new(dl, dy, 0.0));
            }
        }
    }
    out
}

fn realistic(s: &Scenario, start: usize) -> bool {
    if !s.map.is_drivable(s.ego_pose(start).position()) {
        return false;
    }
    [0, start].iter().all(|&f| {
        let mut boxes: Vec<OrientedBox> = s.agents.iter().filter_map(|a| a.box_at(f)).collect();
        boxes.push(s.ego.make_box(s.ego_pose(f)));
        boxes
            .iter()
            .enumerate()
            .all(|(i, a)| boxes[i + 1..].iter().all(|b| !a.intersects(b)))
    })
}

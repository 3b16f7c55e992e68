use crate::geometry::{Pose, Vec2};
use crate::heatmap::{argmax_goal, label_with, GtConfig, GtContext};
use crate::nnet::{kinematic_fallback_to, KinematicConfig, Model};
use crate::raster::{make_transform, rasterize_with_ego, BevRaster, RasterConfig};
use crate::scenario::{Scenario, Trajectory, FRAME_DT, HORIZON_FRAMES};

/// What a planner sees at one simulation step.
pub struct PlanInput<'a> {
    pub scenario: &'a Scenario,
    pub frame: usize,
    pub ego: Pose,
    pub speed: f64,
    /// Simulated ego poses, newest first, the current pose included.
    pub history: Vec<Pose>,
}

impl PlanInput<'_> {
    pub fn rasterize(&self, config: &RasterConfig) -> BevRaster {
        rasterize_with_ego(self.scenario, self.frame, &self.history, config, 0.0)
    }
}

/// Produces world-frame waypoints for frames `frame + 1 ..`; the simulator
/// executes the first one. `None` is a planner fault.
pub trait Planner: Sync {
    fn name(&self) -> &str;
    fn plan(&self, input: &PlanInput) -> Option<Trajectory>;
}

fn to_world(ego: &Pose, local: Trajectory) -> Trajectory {
    Trajectory {
        poses: local.poses.iter().map(|p| ego.compose(p)).collect(),
        dt: local.dt,
    }
}

/// Replays the logged ego track.
pub struct ExpertReplay;

impl Planner for ExpertReplay {
    fn name(&self) -> &str {
        "expert"
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        let poses = (1..=HORIZON_FRAMES)
            .map(|k| input.scenario.ego_pose(input.frame + k))
            .collect();
        Trajectory::new(poses, FRAME_DT).ok()
    }
}

/// Holds the current pose.
pub struct FullStop;

impl Planner for FullStop {
    fn name(&self) -> &str {
        "full-stop"
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        Trajectory::new(vec![input.ego; HORIZON_FRAMES], FRAME_DT).ok()
    }
}

/// Argmax of the ground-truth heatmap built from the simulated ego pose,
/// followed by the kinematic fallback to that goal.
pub struct OraclePlanner {
    pub raster: RasterConfig,
    pub gt: GtConfig,
    pub kinematic: KinematicConfig,
}

impl Default for OraclePlanner {
    fn default() -> Self {
        OraclePlanner {
            raster: RasterConfig::default(),
            gt: GtConfig::default(),
            kinematic: KinematicConfig::default(),
        }
    }
}

impl Planner for OraclePlanner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        let ctx = GtContext::new(input.scenario, input.frame, &input.ego, &self.raster, 0.0);
        let goal = match label_with(&ctx, &self.gt) {
            Ok(gt) => {
                let px = argmax_goal(&gt.heatmap, &gt.patch);
                ctx.tf.pixel_to_local(px.center())
            }
            // Goal off the raster or off-road: steer at the logged pose.
            Err(_) => {
                let g = input.scenario.ego_pose(ctx.horizon_frame());
                input.ego.to_local(g.position())
            }
        };
        drive_to(input, goal, &self.kinematic)
    }
}

fn drive_to(input: &PlanInput, goal: Vec2, cfg: &KinematicConfig) -> Option<Trajectory> {
    let local = kinematic_fallback_to(goal, input.speed, cfg)
        .or_else(|_| kinematic_fallback_to(Vec2::ZERO, input.speed, cfg))
        .ok()?;
    Some(to_world(&input.ego, local))
}

/// The trained network: heatmap argmax in the centre patch, then either the
/// trajectory head or the kinematic fallback to the selected goal.
pub struct LearnedPlanner {
    pub model: Model<f32>,
    pub raster: RasterConfig,
    pub gt: GtConfig,
    pub kinematic: KinematicConfig,
    pub use_head: bool,
}

impl LearnedPlanner {
    pub fn new(model: Model<f32>, raster: RasterConfig, gt: GtConfig) -> Self {
        LearnedPlanner {
            model,
            raster,
            gt,
            kinematic: KinematicConfig::default(),
            use_head: true,
        }
    }
}

impl Planner for LearnedPlanner {
    fn name(&self) -> &str {
        if self.use_head {
            "learned"
        } else {
            "learned-kinematic"
        }
    }

    fn plan(&self, input: &PlanInput) -> Option<Trajectory> {
        let raster = input.rasterize(&self.raster);
        let (heat, emb) = self.model.fcn_forward(&raster).ok()?;
        let patch = self.gt.patch(self.raster.height, self.raster.width);
        let px = argmax_goal(&heat, &patch);
        let tf = make_transform(&input.ego, &self.raster, 0.0);
        let goal = tf.pixel_to_local(px.center());
        if !self.use_head {
            return drive_to(input, goal, &self.kinematic);
        }
        let local = self.model.trajectory_head(goal, input.speed, &emb);
        Some(to_world(&input.ego, local))
    }
}

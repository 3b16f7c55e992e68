//! World-log model: road maps, agent tracks, scenarios, and the procedural
//! generators that stand in for recorded driving logs.

mod generate;
mod io;
mod turn;

pub use generate::{generate_scenario, GeneratorConfig};
pub use io::{load_scenario, save_scenario, scenario_from_str, scenario_to_string, FORMAT_VERSION};
pub use turn::{classify_turn, TurnCategory, DEFAULT_TURN_THRESHOLD};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    is_simple_polygon, point_in_polygon, polyline_band, project_onto_polyline, OrientedBox, Pose,
    Vec2,
};

/// Simulation clock, 10 frames per second.
pub const FRAME_DT: f64 = 0.1;
/// Planning horizon in frames (2 s).
pub const HORIZON_FRAMES: usize = 20;
/// History frames assumed when checking scenario length.
pub const HISTORY_FRAMES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>, dt: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Invariant("trajectory must not be empty".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Invariant(format!("trajectory dt must be positive, got {dt}")));
        }
        Ok(Trajectory { poses, dt })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &Pose {
        &self.poses[0]
    }

    pub fn last(&self) -> &Pose {
        &self.poses[self.poses.len() - 1]
    }

    pub fn time_at(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

/// A recorded track. `poses[k]` is the pose at frame `start_frame + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTrack {
    pub id: u32,
    pub kind: AgentKind,
    pub footprint: Footprint,
    pub start_frame: usize,
    pub poses: Vec<Pose>,
}

impl AgentTrack {
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.poses.len()
    }

    pub fn pose_at(&self, frame: usize) -> Option<Pose> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|k| self.poses.get(k))
            .copied()
    }

    pub fn box_at(&self, frame: usize) -> Option<OrientedBox> {
        self.pose_at(frame)
            .map(|p| OrientedBox::new(p, self.footprint.length, self.footprint.width))
    }

    pub fn make_box(&self, pose: Pose) -> OrientedBox {
        OrientedBox::new(pose, self.footprint.length, self.footprint.width)
    }

    /// Backward-difference speed in m/s (forward difference at the first frame).
    pub fn speed_at(&self, frame: usize) -> f64 {
        let (a, b) = match (self.pose_at(frame.wrapping_sub(1)), self.pose_at(frame)) {
            (Some(a), Some(b)) if frame > 0 => (a, b),
            _ => match (self.pose_at(frame), self.pose_at(frame + 1)) {
                (Some(a), Some(b)) => (a, b),
                _ => return 0.0,
            },
        };
        a.position().dist(b.position()) / FRAME_DT
    }

    pub fn is_stationary(&self) -> bool {
        self.poses
            .windows(2)
            .all(|w| w[0].position().dist(w[1].position()) < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: u32,
    pub centerline: Vec<Vec2>,
    pub width: f64,
}

impl Lane {
    pub fn polygon(&self) -> Vec<Vec2> {
        polyline_band(&self.centerline, self.width)
    }

    /// Unit direction of travel near arc length `s`.
    pub fn direction_at(&self, s: f64) -> Vec2 {
        let mut acc = 0.0;
        for w in self.centerline.windows(2) {
            let len = w[0].dist(w[1]);
            if acc + len >= s && len > 0.0 {
                return (w[1] - w[0]) * (1.0 / len);
            }
            acc += len;
        }
        match self.centerline.len() {
            n if n >= 2 => {
                let d = self.centerline[n - 1] - self.centerline[n - 2];
                d * (1.0 / d.norm().max(1e-12))
            }
            _ => Vec2::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightState {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficLight {
    pub id: u32,
    pub position: Vec2,
    /// Lanes whose traffic must obey this light.
    pub lane_ids: Vec<u32>,
    /// Scripted per-frame state. Frames past the end keep the last state.
    pub states: Vec<LightState>,
}

impl TrafficLight {
    pub fn state_at(&self, frame: usize) -> LightState {
        self.states
            .get(frame)
            .or_else(|| self.states.last())
            .copied()
            .unwrap_or(LightState::Green)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadMap {
    pub lanes: Vec<Lane>,
    pub drivable_polygons: Vec<Vec<Vec2>>,
    pub crosswalks: Vec<Vec<Vec2>>,
    pub traffic_lights: Vec<TrafficLight>,
    pub route_lanes: Vec<u32>,
}

impl RoadMap {
    pub fn lane(&self, id: u32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn route(&self) -> impl Iterator<Item = &Lane> {
        self.route_lanes.iter().filter_map(|id| self.lane(*id))
    }

    pub fn is_drivable(&self, p: Vec2) -> bool {
        self.drivable_polygons
            .iter()
            .any(|poly| point_in_polygon(p, poly))
    }

    /// Lane containing `p`, preferring lanes whose direction agrees with `heading`.
    pub fn lane_at(&self, p: Vec2, heading: Option<f64>) -> Option<u32> {
        let mut best: Option<(f64, u32)> = None;
        for lane in &self.lanes {
            let Some((s, d)) = project_onto_polyline(p, &lane.centerline) else {
                continue;
            };
            if d > lane.width / 2.0 {
                continue;
            }
            let mut score = d;
            if let Some(h) = heading {
                if lane.direction_at(s).dot(Vec2::from_angle(h)) < 0.5 {
                    score += 100.0;
                }
            }
            if best.map_or(true, |(b, _)| score < b) {
                best = Some((score, lane.id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Smallest distance from `p` to any route lane centerline.
    pub fn distance_to_route(&self, p: Vec2) -> f64 {
        self.route()
            .filter_map(|l| project_onto_polyline(p, &l.centerline))
            .map(|(_, d)| d)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        for id in &self.route_lanes {
            if self.lane(*id).is_none() {
                return Err(Error::Invariant(format!("route lane {id} not in lanes")));
            }
        }
        for lane in &self.lanes {
            if !(lane.width > 0.0) || lane.centerline.len() < 2 {
                return Err(Error::Invariant(format!("lane {} is degenerate", lane.id)));
            }
        }
        for (i, poly) in self.drivable_polygons.iter().enumerate() {
            if !is_simple_polygon(poly) {
                return Err(Error::Invariant(format!("drivable polygon {i} is not simple")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioCategory {
    LaneFollowing,
    LaneChanging,
    Intersection,
    Flexibility,
}

impl ScenarioCategory {
    pub const ALL: [ScenarioCategory; 4] = [
        ScenarioCategory::LaneFollowing,
        ScenarioCategory::LaneChanging,
        ScenarioCategory::Intersection,
        ScenarioCategory::Flexibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioCategory::LaneFollowing => "LaneFollowing",
            ScenarioCategory::LaneChanging => "LaneChanging",
            ScenarioCategory::Intersection => "Intersection",
            ScenarioCategory::Flexibility => "Flexibility",
        }
    }
}

impl fmt::Display for ScenarioCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        ScenarioCategory::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scenario category '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub map: RoadMap,
    pub ego: AgentTrack,
    pub agents: Vec<AgentTrack>,
    pub n_frames: usize,
    pub category: ScenarioCategory,
    pub seed: u64,
}

impl Scenario {
    /// Stable identifier used in reports and file names.
    pub fn name(&self) -> String {
        format!("{}-{:06}", self.category, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < HORIZON_FRAMES + HISTORY_FRAMES {
            return Err(Error::Invariant(format!(
                "n_frames = {} is shorter than history + horizon ({})",
                self.n_frames,
                HORIZON_FRAMES + HISTORY_FRAMES
            )));
        }
        self.map.validate()?;
        if self.ego.start_frame != 0 || self.ego.poses.len() != self.n_frames {
            return Err(Error::Invariant(
                "ego track must cover every frame of the scenario".into(),
            ));
        }
        for track in std::iter::once(&self.ego).chain(&self.agents) {
            if !(track.footprint.length > 0.0 && track.footprint.width > 0.0) {
                return Err(Error::Invariant(format!(
                    "track {} has a non-positive footprint",
                    track.id
                )));
            }
            if track.end_frame() > self.n_frames {
                return Err(Error::Invariant(format!(
                    "track {} extends past n_frames",
                    track.id
                )));
            }
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invariant("duplicate agent ids".into()));
        }
        if ids.binary_search(&self.ego.id).is_ok() {
            return Err(Error::Invariant("ego id appears among agents".into()));
        }
        Ok(())
    }

    pub fn ego_pose(&self, frame: usize) -> Pose {
        self.ego.poses[frame.min(self.n_frames - 1)]
    }

    /// Whether the light governing the route lane containing `p` is red at `frame`
    /// and lies within `[0, distance]` ahead of `pose`.
    pub fn red_light_ahead(&self, pose: &Pose, frame: usize, distance: f64, half_width: f64) -> bool {
        self.map.traffic_lights.iter().any(|light| {
            if light.state_at(frame) != LightState::Red {
                return false;
            }
            let l = pose.to_local(light.position);
            l.x >= 0.0 && l.x <= distance && l.y.abs() <= half_width
        })
    }

    /// Expert poses for frames `frame ..= frame + HORIZON_FRAMES`, clamped to the log.
    pub fn expert_horizon(&self, frame: usize) -> Trajectory {
        let poses = (frame..=frame + HORIZON_FRAMES)
            .map(|f| self.ego_pose(f))
            .collect();
        Trajectory { poses, dt: FRAME_DT }
    }
}

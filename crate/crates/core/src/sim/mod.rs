//! Closed-loop log replay. Non-ego agents follow their recorded tracks and
//! never react; the planner under test drives the ego at 10 Hz.

mod collision;
mod ood;
mod planners;
mod report;

pub use collision::{check_collision, classify, CollisionEvent, CollisionKind};
pub use ood::{make_ood_suite, OodConfig};
pub use planners::{ExpertReplay, FullStop, LearnedPlanner, OraclePlanner, PlanInput, Planner};
pub use report::{evaluate_suite, CategorySummary, Report, ReportRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose, Vec2};
use crate::scenario::{LightState, Scenario, ScenarioCategory, FRAME_DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// First simulated frame; earlier frames supply the ego history.
    pub start_frame: usize,
    pub duration: f64,
    /// Stuck: average speed below `stuck_speed` over `stuck_window` frames
    /// while the lane ahead is clear in at least `stuck_clear_fraction` of them.
    pub stuck_window: usize,
    pub stuck_speed: f64,
    pub stuck_clear_fraction: f64,
    /// Length of the corridor ahead of the ego checked for obstacles, meters.
    pub clear_distance: f64,
    /// Route deviation: farther than one lane width from every route lane for
    /// more than this many seconds.
    pub route_deviation_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start_frame: 5,
            duration: 15.0,
            stuck_window: 50,
            stuck_speed: 0.5,
            stuck_clear_fraction: 0.8,
            clear_distance: 12.0,
            route_deviation_time: 1.0,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.duration / FRAME_DT).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || self.stuck_window == 0 || !(self.stuck_speed >= 0.0) {
            return Err(Error::Config(
                "duration and stuck window must be positive".into(),
            ));
        }
        if !(self.clear_distance > 0.0 && self.route_deviation_time >= 0.0) {
            return Err(Error::Config("clear_distance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.stuck_clear_fraction) {
            return Err(Error::Config("stuck_clear_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimEvent {
    Collision(CollisionEvent),
    PlannerFault { frame: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub frame: usize,
    /// Ego poses from frame 0 through `frame`.
    pub trace: Vec<Pose>,
    pub speed: f64,
    pub events: Vec<SimEvent>,
    /// Agents currently in contact with the ego.
    touching: Vec<u32>,
}

impl SimState {
    /// Starts from the logged ego state at `start_frame`.
    pub fn new(s: &Scenario, start_frame: usize) -> Result<Self> {
        if start_frame >= s.n_frames {
            return Err(Error::Index(format!(
                "start frame {start_frame} outside scenario of {} frames",
                s.n_frames
            )));
        }
        let trace: Vec<Pose> = (0..=start_frame).map(|f| s.ego_pose(f)).collect();
        Ok(SimState {
            frame: start_frame,
            speed: s.ego.speed_at(start_frame),
            trace,
            events: Vec::new(),
            touching: Vec::new(),
        })
    }

    pub fn ego(&self) -> Pose {
        *self.trace.last().expect("trace is never empty")
    }

    /// Up to `n + 1` most recent poses, newest first.
    pub fn history(&self, n: usize) -> Vec<Pose> {
        self.trace.iter().rev().take(n + 1).copied().collect()
    }
}

/// Agent boxes present at `frame`.
pub fn agent_boxes(s: &Scenario, frame: usize) -> Vec<(u32, OrientedBox)> {
    s.agents
        .iter()
        .filter_map(|a| a.box_at(frame).map(|b| (a.id, b)))
        .collect()
}

/// One 0.1 s step: plan from the current state, move the ego to the first
/// waypoint, advance the replay and record new contacts.
pub fn step(mut state: SimState, s: &Scenario, planner: &dyn Planner) -> Result<SimState> {
    if state.frame + 1 >= s.n_frames {
        return Err(Error::Index(format!(
            "cannot step past frame {} of {}",
            state.frame,
            s.n_frames
        )));
    }
    let ego = state.ego();
    let input = PlanInput {
        scenario: s,
        frame: state.frame,
        ego,
        speed: state.speed,
        history: state.history(crate::scenario::HISTORY_FRAMES),
    };
    let next = match planner.plan(&input) {
        Some(t) if !t.is_empty() && t.poses[0].x.is_finite() && t.poses[0].y.is_finite() => {
            t.poses[0]
        }
        _ => {
            state.events.push(SimEvent::PlannerFault { frame: state.frame });
            ego
        }
    };
    state.frame += 1;
    state.speed = ego.position().dist(next.position()) / FRAME_DT;
    state.trace.push(next);

    let ego_box = s.ego.make_box(next);
    let hits = check_collision(state.frame, &ego_box, &agent_boxes(s, state.frame));
    let now: Vec<u32> = hits.iter().map(|e| e.agent_id).collect();
    for e in hits {
        if !state.touching.contains(&e.agent_id) {
            state.events.push(SimEvent::Collision(e));
        }
    }
    state.touching = now;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scenario: String,
    pub category: ScenarioCategory,
    pub collisions: Vec<CollisionEvent>,
    pub offroad_frames: usize,
    pub stuck: bool,
    pub route_deviation: bool,
    /// Distance driven by the ego, meters.
    pub progress: f64,
    pub planner_faults: usize,
    pub pass: bool,
}

impl EpisodeMetrics {
    pub fn rear_end(&self) -> usize {
        self.collisions
            .iter()
            .filter(|c| c.kind == CollisionKind::RearEnd)
            .count()
    }

    pub fn at_fault_collisions(&self) -> usize {
        self.collisions.len() - self.rear_end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    /// Ego poses for the simulated frames, the start frame included.
    pub trace: Vec<Pose>,
    pub start_frame: usize,
}

/// Runs a full episode and scores it.
pub fn simulate(s: &Scenario, planner: &dyn Planner, cfg: &SimConfig) -> Result<Episode> {
    cfg.validate()?;
    let steps = cfg.steps();
    if cfg.start_frame + steps >= s.n_frames {
        return Err(Error::Config(format!(
            "episode of {steps} steps from frame {} exceeds the {}-frame log",
            cfg.start_frame, s.n_frames
        )));
    }
    let mut state = SimState::new(s, cfg.start_frame)?;
    for _ in 0..steps {
        state = step(state, s, planner)?;
    }
    let trace = state.trace[cfg.start_frame..].to_vec();
    let metrics = score(s, &trace, cfg, &state.events);
    Ok(Episode {
        metrics,
        trace,
        start_frame: cfg.start_frame,
    })
}

pub fn run_episode(s: &Scenario, planner: &dyn Planner, cfg: &SimConfig) -> Result<EpisodeMetrics> {
    simulate(s, planner, cfg).map(|e| e.metrics)
}

fn score(s: &Scenario, trace: &[Pose], cfg: &SimConfig, events: &[SimEvent]) -> EpisodeMetrics {
    let start = cfg.start_frame;
    let collisions: Vec<CollisionEvent> = events
        .iter()
        .filter_map(|e| match e {
            SimEvent::Collision(c) => Some(*c),
            _ => None,
        })
        .collect();
    let planner_faults = events
        .iter()
        .filter(|e| matches!(e, SimEvent::PlannerFault { .. }))
        .count();
    let offroad_frames = trace
        .iter()
        .filter(|p| !s.map.is_drivable(p.position()))
        .count();
    let progress: f64 = trace
        .windows(2)
        .map(|w| w[0].position().dist(w[1].position()))
        .sum();

    let lane_width = s.map.route().map(|l| l.width).fold(0.0, f64::max);
    let limit = (cfg.route_deviation_time / FRAME_DT).round() as usize;
    let mut run = 0;
    let mut route_deviation = false;
    for p in trace {
        if s.map.distance_to_route(p.position()) > lane_width {
            run += 1;
            route_deviation |= run > limit;
        } else {
            run = 0;
        }
    }

    let clear: Vec<bool> = trace
        .iter()
        .enumerate()
        .map(|(k, p)| lane_ahead_clear(s, p, start + k, cfg.clear_distance))
        .collect();
    let mut stuck = false;
    let w = cfg.stuck_window;
    if trace.len() > w {
        for i in 0..trace.len() - w {
            let dist: f64 = trace[i..=i + w]
                .windows(2)
                .map(|p| p[0].position().dist(p[1].position()))
                .sum();
            let avg = dist / (w as f64 * FRAME_DT);
            let n_clear = clear[i..=i + w].iter().filter(|c| **c).count();
            if avg < cfg.stuck_speed && n_clear as f64 >= cfg.stuck_clear_fraction * (w + 1) as f64 {
                stuck = true;
                break;
            }
        }
    }
    if s.category == ScenarioCategory::Flexibility {
        let end = start + trace.len() - 1;
        stuck |= !passes_expert_blockers(s, trace.last().expect("non-empty"), end);
    }

    let pass = collisions.iter().all(|c| c.kind == CollisionKind::RearEnd)
        && offroad_frames == 0
        && !stuck
        && !route_deviation;
    EpisodeMetrics {
        scenario: s.name(),
        category: s.category,
        collisions,
        offroad_frames,
        stuck,
        route_deviation,
        progress,
        planner_faults,
        pass,
    }
}

/// No agent box intrudes on the ego-width corridor ahead and no red light
/// on the route lies within it.
pub fn lane_ahead_clear(s: &Scenario, ego: &Pose, frame: usize, distance: f64) -> bool {
    let len = s.ego.footprint.length;
    let centre = ego.to_world(Vec2::new(len / 2.0 + distance / 2.0, 0.0));
    let corridor = OrientedBox::new(
        Pose::new(centre.x, centre.y, ego.yaw),
        distance,
        s.ego.footprint.width + 0.5,
    );
    let blocked = s
        .agents
        .iter()
        .filter_map(|a| a.box_at(frame))
        .any(|b| corridor.intersects(&b));
    let red = s.map.traffic_lights.iter().any(|light| {
        let l = ego.to_local(light.position);
        light.state_at(frame) == LightState::Red
            && light.lane_ids.iter().any(|id| s.map.route_lanes.contains(id))
            && l.x >= 0.0
            && l.x <= distance + len
    });
    !blocked && !red
}

/// Stationary vehicles overlapping a route lane: the obstacles a nudging
/// manoeuvre has to get around.
pub fn blockers(s: &Scenario) -> Vec<u32> {
    let lanes: Vec<Vec<Vec2>> = s.map.route().map(|l| l.polygon()).collect();
    s.agents
        .iter()
        .filter(|a| a.is_stationary())
        .filter(|a| {
            a.box_at(a.start_frame).is_some_and(|b| {
                b.corners()
                    .iter()
                    .any(|c| lanes.iter().any(|poly| crate::geometry::point_in_polygon(*c, poly)))
            })
        })
        .map(|a| a.id)
        .collect()
}

/// Whether the ego ends up ahead of every blocker that the logged expert has
/// cleared by at least one blocker length at `frame`.
fn passes_expert_blockers(s: &Scenario, ego: &Pose, frame: usize) -> bool {
    let expert = s.ego_pose(frame);
    blockers(s).into_iter().all(|id| {
        let a = s.agents.iter().find(|a| a.id == id).expect("blocker exists");
        let Some(p) = a.pose_at(frame) else { return true };
        let expert_passed = expert.to_local(p.position()).x < -a.footprint.length;
        !expert_passed || ego.to_local(p.position()).x < 0.0
    })
}

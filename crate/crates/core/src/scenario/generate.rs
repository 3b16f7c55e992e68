//! Procedural scenario generators, one per evaluation category.
//!
//! Every generator builds its scene in a local frame (roads along +x), places
//! agents by rejection sampling so that no recorded track ever overlaps the
//! expert ego, and finally applies a random rigid transform so that nothing
//! downstream can rely on a canonical world orientation.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AgentKind, AgentTrack, Footprint, Lane, LightState, RoadMap, Scenario, ScenarioCategory,
    TrafficLight, FRAME_DT, HISTORY_FRAMES, HORIZON_FRAMES,
};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub lane_width: f64,
    pub shoulder: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Upper bound on non-ego agents; placements that cannot be made
    /// conflict-free are dropped.
    pub n_agents: usize,
    pub n_frames: usize,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Apply a random rotation and translation to the finished scene.
    pub randomize_frame: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            lane_width: 3.5,
            shoulder: 1.5,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
            n_agents: 4,
            n_frames: 180,
            min_speed: 4.0,
            max_speed: 7.0,
            randomize_frame: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lane_width > 0.0) {
            return Err(Error::Config("lane_width must be positive".into()));
        }
        if !(self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return Err(Error::Config("vehicle footprint must be positive".into()));
        }
        if self.lane_width <= self.vehicle_width {
            return Err(Error::Config(format!(
                "lane_width {} must exceed vehicle_width {}",
                self.lane_width, self.vehicle_width
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be positive".into()));
        }
        if self.n_frames < HISTORY_FRAMES + HORIZON_FRAMES {
            return Err(Error::Config(format!(
                "n_frames must be at least {}",
                HISTORY_FRAMES + HORIZON_FRAMES
            )));
        }
        if !(self.shoulder >= 0.0) {
            return Err(Error::Config("shoulder must be non-negative".into()));
        }
        if !(self.min_speed > 0.0 && self.max_speed >= self.min_speed) {
            return Err(Error::Config("speed range must be positive and ordered".into()));
        }
        Ok(())
    }

    fn vehicle(&self) -> Footprint {
        Footprint {
            length: self.vehicle_length,
            width: self.vehicle_width,
        }
    }
}

/// Builds a scenario; a pure function of `(category, seed, config)`.
pub fn generate_scenario(
    category: ScenarioCategory,
    seed: u64,
    config: &GeneratorConfig,
) -> Result<Scenario> {
    config.validate()?;
    let salt = match category {
        ScenarioCategory::LaneFollowing => 0x11,
        ScenarioCategory::LaneChanging => 0x22,
        ScenarioCategory::Intersection => 0x33,
        ScenarioCategory::Flexibility => 0x44,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt);
    let mut b = Builder::new(config);
    match category {
        ScenarioCategory::LaneFollowing => lane_following(&mut b, &mut rng),
        ScenarioCategory::LaneChanging => lane_changing(&mut b, &mut rng),
        ScenarioCategory::Intersection => intersection(&mut b, &mut rng),
        ScenarioCategory::Flexibility => flexibility(&mut b, &mut rng),
    }
    let mut scenario = b.finish(category, seed);
    if config.randomize_frame {
        let rot = rng.gen_range(-PI..PI);
        let shift = Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        transform_scenario(&mut scenario, rot, shift);
    }
    scenario.validate()?;
    Ok(scenario)
}

// ---------------------------------------------------------------------------
// Reference paths

#[derive(Debug, Clone, Copy)]
enum Seg {
    Line(f64),
    Arc { len: f64, curvature: f64 },
}

impl Seg {
    fn len(&self) -> f64 {
        match *self {
            Seg::Line(l) => l,
            Seg::Arc { len, .. } => len,
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Seg::Line(_) => 0.0,
            Seg::Arc { curvature, .. } => curvature,
        }
    }

    fn advance(&self, start: Pose, u: f64) -> Pose {
        let k = self.curvature();
        if k.abs() < 1e-12 {
            let h = start.heading();
            return Pose::new(start.x + h.x * u, start.y + h.y * u, start.yaw);
        }
        let th = start.yaw + k * u;
        Pose::new(
            start.x + (th.sin() - start.yaw.sin()) / k,
            start.y - (th.cos() - start.yaw.cos()) / k,
            th,
        )
    }
}

/// Arc-length parameterized path made of lines and circular arcs. Queries
/// beyond either end extrapolate along the end tangent.
#[derive(Debug, Clone)]
struct RefPath {
    segs: Vec<(f64, Pose, Seg)>,
}

impl RefPath {
    fn new(start: Pose, segs: &[Seg]) -> Self {
        let mut out = Vec::with_capacity(segs.len());
        let mut s = 0.0;
        let mut pose = start;
        for seg in segs {
            out.push((s, pose, *seg));
            pose = seg.advance(pose, seg.len());
            s += seg.len();
        }
        RefPath { segs: out }
    }

    fn locate(&self, s: f64) -> (Pose, Seg, f64) {
        if s <= 0.0 {
            let (_, p, _) = self.segs[0];
            return (p, Seg::Line(0.0), s);
        }
        for &(s0, p, seg) in &self.segs {
            if s <= s0 + seg.len() {
                return (p, seg, s - s0);
            }
        }
        let (s0, p, seg) = *self.segs.last().unwrap();
        let end = seg.advance(p, seg.len());
        (end, Seg::Line(0.0), s - s0 - seg.len())
    }

    fn pose_at(&self, s: f64) -> Pose {
        let (p, seg, u) = self.locate(s);
        match seg {
            Seg::Line(_) => Seg::Line(0.0).advance(p, u),
            _ => seg.advance(p, u),
        }
    }

    fn curvature_at(&self, s: f64) -> f64 {
        let (_, seg, _) = self.locate(s);
        seg.curvature()
    }

    /// Pose at lateral offset `d` (positive left) with lateral slope `dd = d'(s)`.
    fn offset_pose(&self, s: f64, d: f64, dd: f64) -> Pose {
        let base = self.pose_at(s);
        let k = self.curvature_at(s);
        let n = base.heading().perp();
        let p = base.position() + n * d;
        Pose::new(p.x, p.y, base.yaw + dd.atan2(1.0 - k * d))
    }

    fn polyline(&self, d: f64, s0: f64, s1: f64, step: f64) -> Vec<Vec2> {
        let n = ((s1 - s0) / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let s = s0 + (s1 - s0) * i as f64 / n as f64;
                self.offset_pose(s, d, 0.0).position()
            })
            .collect()
    }

    /// Band between lateral offsets `d_lo < d_hi` as a closed polygon.
    fn band(&self, d_lo: f64, d_hi: f64, s0: f64, s1: f64, step: f64) -> Vec<Vec2> {
        let mut poly = self.polyline(d_hi, s0, s1, step);
        let mut lower = self.polyline(d_lo, s0, s1, step);
        lower.reverse();
        poly.extend(lower);
        poly
    }
}

/// Quintic smoothstep from 0 at `a` to 1 at `b`, with its derivative in `s`.
fn smoothstep(s: f64, a: f64, b: f64) -> (f64, f64) {
    if s <= a {
        return (0.0, 0.0);
    }
    if s >= b {
        return (1.0, 0.0);
    }
    let w = b - a;
    let u = (s - a) / w;
    let h = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    let dh = 30.0 * u * u * (1.0 - u) * (1.0 - u) / w;
    (h, dh)
}

/// Piecewise lateral offset made of smooth ramps.
#[derive(Debug, Clone, Default)]
struct Lateral {
    base: f64,
    /// (start, end, amplitude) ramps; amplitudes add.
    ramps: Vec<(f64, f64, f64)>,
}

impl Lateral {
    fn at(&self, s: f64) -> (f64, f64) {
        self.ramps
            .iter()
            .fold((self.base, 0.0), |(d, dd), &(a, b, amp)| {
                let (h, dh) = smoothstep(s, a, b);
                (d + amp * h, dd + amp * dh)
            })
    }
}

// ---------------------------------------------------------------------------
// Scene assembly

struct Builder<'a> {
    cfg: &'a GeneratorConfig,
    n_frames: usize,
    map: RoadMap,
    ego: Option<AgentTrack>,
    agents: Vec<AgentTrack>,
    next_id: u32,
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a GeneratorConfig) -> Self {
        Builder {
            cfg,
            n_frames: cfg.n_frames,
            map: RoadMap {
                lanes: Vec::new(),
                drivable_polygons: Vec::new(),
                crosswalks: Vec::new(),
                traffic_lights: Vec::new(),
                route_lanes: Vec::new(),
            },
            ego: None,
            agents: Vec::new(),
            next_id: 1,
        }
    }

    fn add_lane(&mut self, centerline: Vec<Vec2>) -> u32 {
        let id = self.map.lanes.len() as u32 + 1;
        self.map.lanes.push(Lane {
            id,
            centerline,
            width: self.cfg.lane_width,
        });
        id
    }

    fn track(
        &self,
        id: u32,
        kind: AgentKind,
        footprint: Footprint,
        frames: std::ops::Range<usize>,
        pose: impl Fn(usize) -> Pose,
    ) -> AgentTrack {
        AgentTrack {
            id,
            kind,
            footprint,
            start_frame: frames.start,
            poses: frames.map(pose).collect(),
        }
    }

    fn set_ego(&mut self, pose: impl Fn(usize) -> Pose) {
        let t = self.track(0, AgentKind::Vehicle, self.cfg.vehicle(), 0..self.n_frames, pose);
        self.ego = Some(t);
    }

    /// Adds the track unless it comes within `margin` of the ego or any
    /// existing agent at some frame.
    fn try_add(
        &mut self,
        kind: AgentKind,
        footprint: Footprint,
        frames: std::ops::Range<usize>,
        margin: f64,
        pose: impl Fn(usize) -> Pose,
    ) -> bool {
        let cand = self.track(self.next_id, kind, footprint, frames, pose);
        let ego = self.ego.as_ref().expect("ego placed first");
        let inflate = |b: OrientedBox, m: f64| OrientedBox::new(b.pose, b.length + 2.0 * m, b.width + 2.0 * m);
        for f in cand.start_frame..cand.end_frame() {
            let cb = cand.box_at(f).unwrap();
            if inflate(cb, margin).intersects(&ego.box_at(f).unwrap()) {
                return false;
            }
            for other in &self.agents {
                if let Some(ob) = other.box_at(f) {
                    if inflate(cb, 0.5).intersects(&ob) {
                        return false;
                    }
                }
            }
        }
        self.agents.push(cand);
        self.next_id += 1;
        true
    }

    fn finish(self, category: ScenarioCategory, seed: u64) -> Scenario {
        Scenario {
            map: self.map,
            ego: self.ego.expect("generator placed the ego"),
            agents: self.agents,
            n_frames: self.n_frames,
            category,
            seed,
        }
    }
}

fn transform_scenario(s: &mut Scenario, rot: f64, shift: Vec2) {
    let tp = |p: Vec2| p.rotate(rot) + shift;
    let tpose = |p: &Pose| {
        let q = tp(p.position());
        Pose::new(q.x, q.y, p.yaw + rot)
    };
    for lane in &mut s.map.lanes {
        lane.centerline.iter_mut().for_each(|p| *p = tp(*p));
    }
    for poly in s.map.drivable_polygons.iter_mut().chain(&mut s.map.crosswalks) {
        poly.iter_mut().for_each(|p| *p = tp(*p));
    }
    for light in &mut s.map.traffic_lights {
        light.position = tp(light.position);
    }
    for track in std::iter::once(&mut s.ego).chain(&mut s.agents) {
        track.poses.iter_mut().for_each(|p| *p = tpose(p));
    }
}

fn dt_frames(k: usize) -> f64 {
    k as f64 * FRAME_DT
}

// ---------------------------------------------------------------------------
// Categories

fn lane_following(b: &mut Builder, rng: &mut ChaCha8Rng) {
    let cfg = b.cfg.clone();
    let lw = cfg.lane_width;
    let n_lanes: usize = rng.gen_range(2..=3);
    let curvature = if rng.gen_bool(0.4) {
        0.0
    } else {
        let k = rng.gen_range(1.0 / 400.0..1.0 / 150.0);
        if rng.gen_bool(0.5) {
            k
        } else {
            -k
        }
    };
    let road_len = 360.0;
    let path = RefPath::new(Pose::new(0.0, 0.0, 0.0), &[Seg::Arc { len: road_len, curvature }]);
    let half = n_lanes as f64 * lw / 2.0 + cfg.shoulder;
    let offsets: Vec<f64> = (0..n_lanes)
        .map(|i| (i as f64 - (n_lanes as f64 - 1.0) / 2.0) * lw)
        .collect();
    let lane_ids: Vec<u32> = offsets
        .iter()
        .map(|&d| b.add_lane(path.polyline(d, 0.0, road_len, 2.0)))
        .collect();
    b.map.drivable_polygons.push(path.band(-half, half, 0.0, road_len, 2.0));

    let ego_lane = rng.gen_range(0..n_lanes);
    let v = rng.gen_range(cfg.min_speed..=cfg.max_speed);
    let s0 = 40.0;
    let de = offsets[ego_lane];
    {
        let path = path.clone();
        b.set_ego(move |k| path.offset_pose(s0 + v * dt_frames(k), de, 0.0));
    }
    b.map.route_lanes = vec![lane_ids[ego_lane]];

    let n = b.n_frames;
    for slot in 0..cfg.n_agents {
        for _attempt in 0..20 {
            let (d, start, speed) = match slot {
                0 => (de, s0 + rng.gen_range(18.0..35.0), v + rng.gen_range(0.0..1.5)),
                1 => (
                    de,
                    s0 - rng.gen_range(12.0..20.0),
                    (v - rng.gen_range(0.0..0.5)).max(1.0),
                ),
                _ => {
                    let others: Vec<usize> = (0..n_lanes).filter(|i| *i != ego_lane).collect();
                    let lane = others[rng.gen_range(0..others.len())];
                    (
                        offsets[lane],
                        rng.gen_range(10.0..100.0),
                        rng.gen_range((v - 2.0).max(1.0)..v + 2.0),
                    )
                }
            };
            let p = path.clone();
            let fp = cfg.vehicle();
            if b.try_add(AgentKind::Vehicle, fp, 0..n, 1.0, move |k| {
                p.offset_pose(start + speed * dt_frames(k), d, 0.0)
            }) {
                break;
            }
        }
    }
}

fn lane_changing(b: &mut Builder, rng: &mut ChaCha8Rng) {
    let cfg = b.cfg.clone();
    let lw = cfg.lane_width;
    let road_len = 360.0;
    let path = RefPath::new(Pose::new(0.0, 0.0, 0.0), &[Seg::Line(road_len)]);
    // sign = +1 merges from the right lane into the left lane.
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let d_from = -sign * lw / 2.0;
    let d_to = sign * lw / 2.0;
    let v = rng.gen_range(cfg.min_speed..=cfg.max_speed);
    let s0 = 40.0;
    let s_start = s0 + v * dt_frames(HISTORY_FRAMES);
    let s_change = s_start + v * rng.gen_range(1.0..4.0);
    let change_len = v * rng.gen_range(3.5..4.5);
    let s_end = s_change + change_len + rng.gen_range(10.0..25.0);
    let edge = lw + cfg.shoulder;

    let from_id = b.add_lane(path.polyline(d_from, 0.0, s_end, 2.0));
    let to_id = b.add_lane(path.polyline(d_to, 0.0, road_len, 2.0));
    b.map.route_lanes = vec![from_id, to_id];
    let flip = |p: Vec2| Vec2::new(p.x, sign * p.y);
    let target_side = vec![
        Vec2::new(0.0, -0.5),
        Vec2::new(road_len, -0.5),
        Vec2::new(road_len, edge),
        Vec2::new(0.0, edge),
    ];
    let ending_side = vec![
        Vec2::new(0.0, -edge),
        Vec2::new(s_end, -edge),
        Vec2::new(s_end + 20.0, 0.0),
        Vec2::new(0.0, 0.0),
    ];
    for mut poly in [target_side, ending_side] {
        poly.iter_mut().for_each(|p| *p = flip(*p));
        if sign < 0.0 {
            poly.reverse();
        }
        b.map.drivable_polygons.push(poly);
    }

    let lateral = Lateral {
        base: d_from,
        ramps: vec![(s_change, s_change + change_len, d_to - d_from)],
    };
    let ego_path = {
        let path = path.clone();
        let lat = lateral.clone();
        move |s: f64| {
            let (d, dd) = lat.at(s);
            path.offset_pose(s, d, dd)
        }
    };
    {
        let f = ego_path.clone();
        b.set_ego(move |k| f(s0 + v * dt_frames(k)));
    }

    let n = b.n_frames;
    for slot in 0..cfg.n_agents {
        for _attempt in 0..20 {
            let fp = cfg.vehicle();
            let added = if slot == 0 && rng.gen_bool(0.6) {
                let gap = rng.gen_range(14.0..22.0);
                let f = ego_path.clone();
                b.try_add(AgentKind::Vehicle, fp, 0..n, 1.0, move |k| {
                    f(s0 - gap + v * dt_frames(k))
                })
            } else {
                let start = rng.gen_range(5.0..110.0);
                let speed = rng.gen_range((v - 2.0).max(1.0)..v + 2.5);
                let p = path.clone();
                b.try_add(AgentKind::Vehicle, fp, 0..n, 1.5, move |k| {
                    p.offset_pose(start + speed * dt_frames(k), d_to, 0.0)
                })
            };
            if added {
                break;
            }
        }
    }
}

fn flexibility(b: &mut Builder, rng: &mut ChaCha8Rng) {
    let cfg = b.cfg.clone();
    let lw = cfg.lane_width;
    let road_len = 360.0;
    let path = RefPath::new(Pose::new(0.0, 0.0, 0.0), &[Seg::Line(road_len)]);
    let right_shoulder = cfg.shoulder.max(cfg.vehicle_width + 0.5);
    let d_ego = -lw / 2.0;
    let d_left = lw / 2.0;
    let ego_lane = b.add_lane(path.polyline(d_ego, 0.0, road_len, 2.0));
    b.add_lane(path.polyline(d_left, 0.0, road_len, 2.0));
    b.map.route_lanes = vec![ego_lane];
    b.map.drivable_polygons.push(path.band(
        -lw - right_shoulder,
        lw + cfg.shoulder,
        0.0,
        road_len,
        2.0,
    ));

    let v = rng.gen_range(cfg.min_speed..=cfg.max_speed.min(6.0));
    let s0 = 40.0;
    let s_start = s0 + v * dt_frames(HISTORY_FRAMES);
    let mut parked = vec![s_start + rng.gen_range(22.0..40.0)];
    if rng.gen_bool(0.35) {
        parked.push(parked[0] + rng.gen_range(45.0..60.0));
    }
    let mut lateral = Lateral {
        base: d_ego,
        ramps: Vec::new(),
    };
    let mut parked_poses = Vec::new();
    for &sp in &parked {
        let overlap = rng.gen_range(0.7..1.2);
        let d_car = -lw + overlap - cfg.vehicle_width / 2.0;
        let amp = overlap + 0.15;
        lateral.ramps.push((sp - 22.0, sp - 8.0, amp));
        lateral.ramps.push((sp + 5.0, sp + 20.0, -amp));
        let p = path.offset_pose(sp, d_car, 0.0);
        parked_poses.push(Pose::new(p.x, p.y, p.yaw + rng.gen_range(-0.05..0.05)));
    }
    let ego_path = {
        let path = path.clone();
        let lat = lateral.clone();
        move |s: f64| {
            let (d, dd) = lat.at(s);
            path.offset_pose(s, d, dd)
        }
    };
    {
        let f = ego_path.clone();
        b.set_ego(move |k| f(s0 + v * dt_frames(k)));
    }

    let n = b.n_frames;
    for pose in parked_poses {
        let added = b.try_add(AgentKind::Vehicle, cfg.vehicle(), 0..n, 0.3, move |_| pose);
        debug_assert!(added, "parked vehicle placement is clear of the expert by construction");
    }
    for slot in 0..cfg.n_agents.saturating_sub(1) {
        for _attempt in 0..20 {
            let fp = cfg.vehicle();
            let added = if slot == 0 && rng.gen_bool(0.5) {
                let gap = rng.gen_range(14.0..22.0);
                let f = ego_path.clone();
                b.try_add(AgentKind::Vehicle, fp, 0..n, 1.0, move |k| {
                    f(s0 - gap + v * dt_frames(k))
                })
            } else {
                let start = rng.gen_range(5.0..120.0);
                let speed = rng.gen_range(v..v + 3.0);
                let p = path.clone();
                b.try_add(AgentKind::Vehicle, fp, 0..n, 1.0, move |k| {
                    p.offset_pose(start + speed * dt_frames(k), d_left, 0.0)
                })
            };
            if added {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Maneuver {
    Straight,
    Left,
    Right,
}

fn intersection(b: &mut Builder, rng: &mut ChaCha8Rng) {
    let cfg = b.cfg.clone();
    let lw = cfg.lane_width;
    let h = lw / 2.0;
    let q = 10.0; // half side of the junction box
    let arm = 90.0;
    let wr = lw + cfg.shoulder;
    let n = b.n_frames;

    // Junction box plus four arms, each overlapping the box slightly.
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
        vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ]
    };
    b.map.drivable_polygons.extend([
        rect(-q, -q, q, q),
        rect(-q - arm, -wr, -q + 0.5, wr),
        rect(q - 0.5, -wr, q + arm, wr),
        rect(-wr, -q - arm, wr, -q + 0.5),
        rect(-wr, q - 0.5, wr, q + arm),
    ]);
    b.map.crosswalks.extend([
        rect(-q - 4.0, -wr, -q - 1.0, wr),
        rect(q + 1.0, -wr, q + 4.0, wr),
        rect(-wr, -q - 4.0, wr, -q - 1.0),
        rect(-wr, q + 1.0, wr, q + 4.0),
    ]);

    let line = |a: Vec2, bb: Vec2| -> Vec<Vec2> {
        let steps = (a.dist(bb) / 2.0).ceil() as usize;
        (0..=steps)
            .map(|i| a + (bb - a) * (i as f64 / steps as f64))
            .collect()
    };
    let w_in = b.add_lane(line(Vec2::new(-q - arm, -h), Vec2::new(-q, -h)));
    let _w_out = b.add_lane(line(Vec2::new(-q, h), Vec2::new(-q - arm, h)));
    let e_in = b.add_lane(line(Vec2::new(q + arm, h), Vec2::new(q, h)));
    let e_out = b.add_lane(line(Vec2::new(q, -h), Vec2::new(q + arm, -h)));
    let n_in = b.add_lane(line(Vec2::new(-h, q + arm), Vec2::new(-h, q)));
    let n_out = b.add_lane(line(Vec2::new(h, q), Vec2::new(h, q + arm)));
    let s_in = b.add_lane(line(Vec2::new(h, -q - arm), Vec2::new(h, -q)));
    let s_out = b.add_lane(line(Vec2::new(-h, -q), Vec2::new(-h, -q - arm)));

    let maneuver = match rng.gen_range(0..3) {
        0 => Maneuver::Straight,
        1 => Maneuver::Left,
        _ => Maneuver::Right,
    };
    let (conn, exit_lane) = match maneuver {
        Maneuver::Straight => (Seg::Line(2.0 * q), e_out),
        Maneuver::Left => {
            let r = q + h;
            (Seg::Arc { len: FRAC_PI_2 * r, curvature: 1.0 / r }, n_out)
        }
        Maneuver::Right => {
            let r = q - h;
            (Seg::Arc { len: FRAC_PI_2 * r, curvature: -1.0 / r }, s_out)
        }
    };
    let ego_path = RefPath::new(
        Pose::new(-q - arm, -h, 0.0),
        &[Seg::Line(arm), conn, Seg::Line(arm)],
    );
    let conn_path = RefPath::new(Pose::new(-q, -h, 0.0), &[conn]);
    let conn_id = b.add_lane(conn_path.polyline(0.0, 0.0, conn.len(), 1.0));
    b.map.route_lanes = vec![w_in, conn_id, exit_lane];

    // Signal plan: west/east approaches share a phase, north/south the opposite.
    let start = HISTORY_FRAMES;
    let red_until = if rng.gen_bool(0.5) {
        Some(start + rng.gen_range(25..90))
    } else {
        None
    };
    let ew_states: Vec<LightState> = (0..n)
        .map(|k| match red_until {
            Some(g) if k < g => LightState::Red,
            _ => LightState::Green,
        })
        .collect();
    let ns_states: Vec<LightState> = ew_states
        .iter()
        .map(|s| match s {
            LightState::Red => LightState::Green,
            LightState::Green => LightState::Red,
        })
        .collect();
    let lights = [
        (Vec2::new(-q, -h), w_in, &ew_states),
        (Vec2::new(q, h), e_in, &ew_states),
        (Vec2::new(h, -q), s_in, &ns_states),
        (Vec2::new(-h, q), n_in, &ns_states),
    ];
    for (i, (pos, lane, states)) in lights.into_iter().enumerate() {
        b.map.traffic_lights.push(TrafficLight {
            id: i as u32 + 1,
            position: pos,
            lane_ids: vec![lane],
            states: states.clone(),
        });
    }

    // Expert longitudinal profile: cruise, stop short of the line on red.
    let mut v_cruise = rng.gen_range(cfg.min_speed..=cfg.max_speed.min(6.5));
    if maneuver != Maneuver::Straight {
        v_cruise = v_cruise.min(5.0);
    }
    let dist_to_line = rng.gen_range(12.0..35.0);
    let stop_s = arm - cfg.vehicle_length / 2.0 - 1.0;
    let (accel, brake, comfort) = (1.5, 4.0, 2.0);
    let mut s = arm - dist_to_line - v_cruise * dt_frames(start);
    let mut v = v_cruise;
    let mut profile = Vec::with_capacity(n);
    for k in 0..n {
        profile.push(s);
        let red = ew_states.get(k + 1).copied() == Some(LightState::Red);
        let must_stop = red && s <= stop_s + 1e-9;
        let v_des = if must_stop {
            v_cruise.min((2.0 * comfort * (stop_s - s).max(0.0)).sqrt())
        } else {
            v_cruise
        };
        v = if v_des > v {
            (v + accel * FRAME_DT).min(v_des)
        } else {
            (v - brake * FRAME_DT).max(v_des)
        };
        s += v * FRAME_DT;
        if must_stop {
            s = s.min(stop_s);
        }
    }
    {
        let p = ego_path.clone();
        let prof = profile.clone();
        b.set_ego(move |k| p.pose_at(prof[k]));
    }

    // Follower on the same path, keeping a fixed path-distance gap.
    if cfg.n_agents > 0 && rng.gen_bool(0.6) {
        let gap = rng.gen_range(15.0..22.0);
        let p = ego_path.clone();
        let prof = profile.clone();
        b.try_add(AgentKind::Vehicle, cfg.vehicle(), 0..n, 1.0, move |k| {
            p.pose_at(prof[k] - gap)
        });
    }
    let mut budget = cfg.n_agents.saturating_sub(b.agents.len());
    // Cross traffic runs while the west approach holds red.
    if let Some(green_at) = red_until {
        for _ in 0..budget.min(2) {
            for _attempt in 0..20 {
                let southbound = rng.gen_bool(0.5);
                let speed = rng.gen_range(5.0..8.0);
                let latest = green_at.saturating_sub(25).max(start + 1);
                let k_cross = rng.gen_range(0..latest) as f64;
                let p = if southbound {
                    RefPath::new(Pose::new(-h, q + arm, -FRAC_PI_2), &[Seg::Line(2.0 * (q + arm))])
                } else {
                    RefPath::new(Pose::new(h, -q - arm, FRAC_PI_2), &[Seg::Line(2.0 * (q + arm))])
                };
                let center = q + arm;
                if b.try_add(AgentKind::Vehicle, cfg.vehicle(), 0..n, 1.5, move |k| {
                    p.pose_at(center + speed * (k as f64 - k_cross) * FRAME_DT)
                }) {
                    budget -= 1;
                    break;
                }
            }
        }
    } else if budget > 0 {
        // Oncoming traffic on a green phase, only when it clears the ego.
        for _attempt in 0..20 {
            let speed = rng.gen_range(4.0..7.0);
            let start_s = rng.gen_range(0.0..120.0);
            let p = RefPath::new(Pose::new(q + arm, h, PI), &[Seg::Line(2.0 * (q + arm))]);
            if b.try_add(AgentKind::Vehicle, cfg.vehicle(), 0..n, 1.5, move |k| {
                p.pose_at(start_s + speed * dt_frames(k))
            }) {
                budget -= 1;
                break;
            }
        }
    }
    // A pedestrian on a crosswalk the ego never uses.
    if budget > 0 {
        let (from, to) = match maneuver {
            Maneuver::Left => (Vec2::new(-wr - 0.5, -q - 2.5), Vec2::new(wr + 0.5, -q - 2.5)),
            _ => (Vec2::new(-wr - 0.5, q + 2.5), Vec2::new(wr + 0.5, q + 2.5)),
        };
        let walk = 1.2;
        let dur = (from.dist(to) / walk / FRAME_DT).ceil() as usize;
        let t0 = rng.gen_range(0..n.saturating_sub(dur).max(1));
        let frames = t0..(t0 + dur).min(n);
        let heading = (to - from).y.atan2((to - from).x);
        let fp = Footprint {
            length: 0.6,
            width: 0.6,
        };
        b.try_add(AgentKind::Pedestrian, fp, frames, 1.0, move |k| {
            let u = ((k - t0) as f64 * walk * FRAME_DT) / from.dist(to);
            let p = from + (to - from) * u.min(1.0);
            Pose::new(p.x, p.y, heading)
        });
    }
}

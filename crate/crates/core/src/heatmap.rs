//! Goal heatmaps and their ground-truth construction.
//!
//! A ground-truth heatmap starts at a baseline of 0.5 on the road, rises to 1
//! at the expert's position two seconds ahead, dips towards 0 where other
//! agents will be, and is 0 off the road. The width of the goal bump adapts to
//! the free space around the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2};
use crate::raster::{box_mask, drivable_mask, make_transform, RasterConfig, RasterTransform};
use crate::scenario::{AgentTrack, RoadMap, Scenario, HORIZON_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Pixel { row, col }
    }

    /// Continuous pixel coordinates `(u, v)` of the pixel centre.
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.col as f64, self.row as f64)
    }

    /// Nearest pixel to continuous coordinates, if inside the grid.
    pub fn from_point(p: Vec2, height: usize, width: usize) -> Option<Pixel> {
        let (col, row) = (p.x.round(), p.y.round());
        if row < 0.0 || col < 0.0 || row >= height as f64 || col >= width as f64 {
            return None;
        }
        Some(Pixel::new(row as usize, col as usize))
    }
}

/// Row-major single-channel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Per-pixel loss weights; shares the heatmap layout.
pub type WeightMask = Heatmap;

impl Heatmap {
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Heatmap {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.row, p.col)
    }

    pub fn same_shape(&self, other: &Heatmap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Half-open rectangle of pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchRegion {
    /// Centred square-ish patch whose sides are `fraction` of the grid sides.
    pub fn centered(height: usize, width: usize, fraction: f64) -> Self {
        let ph = ((height as f64 * fraction).round() as usize).clamp(1, height);
        let pw = ((width as f64 * fraction).round() as usize).clamp(1, width);
        PatchRegion {
            top: (height - ph) / 2,
            left: (width - pw) / 2,
            height: ph,
            width: pw,
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        PatchRegion {
            top: 0,
            left: 0,
            height,
            width,
        }
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row >= self.top
            && p.row < self.top + self.height
            && p.col >= self.left
            && p.col < self.left + self.width
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.top..self.top + self.height
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.left..self.left + self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0 && self.width > 0 && self.top + self.height <= height && self.left + self.width <= width
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.top, self.left, self.height, self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtConfig {
    /// Candidate goal-kernel widths in pixels, strictly decreasing.
    pub sigma_candidates: Vec<f64>,
    /// Width of the agent kernels in pixels.
    pub neg_sigma: f64,
    pub baseline: f64,
    /// Side of the loss patch as a fraction of the image side.
    pub patch_fraction: f64,
    /// Loss weight of pixels left at the baseline.
    pub drivable_weight: f64,
}

impl Default for GtConfig {
    fn default() -> Self {
        GtConfig {
            sigma_candidates: vec![5.0, 4.0, 3.0, 2.0, 1.0],
            neg_sigma: 2.0,
            baseline: 0.5,
            patch_fraction: 0.5,
            drivable_weight: 0.6,
        }
    }
}

impl GtConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.sigma_candidates;
        if c.is_empty() || c.iter().any(|s| !(*s > 0.0)) || c.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "sigma_candidates must be positive and strictly decreasing".into(),
            ));
        }
        if !(self.neg_sigma > 0.0) {
            return Err(Error::Config("neg_sigma must be positive".into()));
        }
        if !(self.baseline > 0.0 && self.baseline < 1.0) {
            return Err(Error::Config("baseline must lie in (0, 1)".into()));
        }
        if !(self.patch_fraction > 0.0 && self.patch_fraction <= 1.0) {
            return Err(Error::Config("patch_fraction must lie in (0, 1]".into()));
        }
        if !(self.drivable_weight > 0.0) {
            return Err(Error::Config("drivable_weight must be positive".into()));
        }
        Ok(())
    }

    pub fn patch(&self, height: usize, width: usize) -> PatchRegion {
        PatchRegion::centered(height, width, self.patch_fraction)
    }

    fn smallest_sigma(&self) -> f64 {
        *self.sigma_candidates.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalLabel {
    pub pixel: Pixel,
    pub sigma_used: f64,
}

/// Unnormalized Gaussian with 3σ box truncation.
pub fn gaussian_value(d_row: f64, d_col: f64, sigma: f64) -> f64 {
    let cut = 3.0 * sigma;
    if d_row.abs() > cut || d_col.abs() > cut {
        return 0.0;
    }
    (-(d_row * d_row + d_col * d_col) / (2.0 * sigma * sigma)).exp()
}

/// Truncated Gaussian bump centred at continuous `(row, col)`.
pub fn gaussian_kernel(center: (f64, f64), sigma: f64, height: usize, width: usize) -> Heatmap {
    let mut h = Heatmap::filled(height, width, 0.0);
    let (rows, cols) = support(center, sigma, height, width);
    for row in rows {
        for col in cols.clone() {
            h.set(row, col, gaussian_value(row as f64 - center.0, col as f64 - center.1, sigma));
        }
    }
    h
}

/// Grid rows and columns within the 3σ box around `center`.
fn support(
    center: (f64, f64),
    sigma: f64,
    height: usize,
    width: usize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let cut = 3.0 * sigma;
    let span = |c: f64, n: usize| {
        let lo = (c - cut).ceil().max(0.0);
        let hi = ((c + cut).floor() + 1.0).min(n as f64);
        if hi <= lo {
            0..0
        } else {
            lo as usize..hi as usize
        }
    };
    (span(center.0, height), span(center.1, width))
}

/// Drops agents that are behind the ego along its lane and in the same lane.
/// Agents absent at `frame` are kept; their lane cannot be established.
pub fn rear_agent_filter<'a>(
    agents: &'a [AgentTrack],
    map: &RoadMap,
    ego: &Pose,
    ego_lane: Option<u32>,
    frame: usize,
) -> Vec<&'a AgentTrack> {
    let Some(lane_id) = ego_lane else {
        return agents.iter().collect();
    };
    let direction = map
        .lane(lane_id)
        .and_then(|lane| {
            crate::geometry::project_onto_polyline(ego.position(), &lane.centerline)
                .map(|(s, _)| lane.direction_at(s))
        })
        .unwrap_or_else(|| ego.heading());
    agents
        .iter()
        .filter(|a| {
            let Some(p) = a.pose_at(frame) else {
                return true;
            };
            let behind = (p.position() - ego.position()).dot(direction) < 0.0;
            let same_lane = map.lane_at(p.position(), Some(p.yaw)) == Some(lane_id);
            !(behind && same_lane)
        })
        .collect()
}

/// Everything needed to label one frame from a given ego pose.
pub struct GtContext<'a> {
    pub scenario: &'a Scenario,
    pub frame: usize,
    pub tf: RasterTransform,
    pub height: usize,
    pub width: usize,
    /// Agents kept by the rear filter, at the horizon-end frame.
    pub obstacles: Vec<&'a AgentTrack>,
    pub drivable: Vec<bool>,
}

impl<'a> GtContext<'a> {
    pub fn new(
        s: &'a Scenario,
        frame: usize,
        ego: &Pose,
        raster: &RasterConfig,
        extra_rotation: f64,
    ) -> Self {
        let tf = make_transform(ego, raster, extra_rotation);
        let ego_lane = s.map.lane_at(ego.position(), Some(ego.yaw));
        let obstacles = rear_agent_filter(&s.agents, &s.map, ego, ego_lane, frame);
        let drivable = drivable_mask(s, &tf, raster.height, raster.width);
        GtContext {
            scenario: s,
            frame,
            tf,
            height: raster.height,
            width: raster.width,
            obstacles,
            drivable,
        }
    }

    pub fn horizon_frame(&self) -> usize {
        self.frame + HORIZON_FRAMES
    }

    /// Pixel of the expert pose at the horizon end.
    pub fn expert_goal_pixel(&self) -> Result<Pixel> {
        let goal = self.scenario.ego_pose(self.horizon_frame());
        Pixel::from_point(self.tf.world_to_pixel(goal.position()), self.height, self.width)
            .ok_or_else(|| Error::Label("goal outside the raster".into()))
    }

    pub fn occupancy(&self) -> Vec<bool> {
        let boxes: Vec<_> = self
            .obstacles
            .iter()
            .filter_map(|a| a.box_at(self.horizon_frame()))
            .collect();
        box_mask(&boxes, &self.tf, self.height, self.width)
    }

    /// Rounded pixel positions of the obstacles at the horizon end.
    pub fn obstacle_pixels(&self) -> Vec<Vec2> {
        self.obstacles
            .iter()
            .filter_map(|a| a.pose_at(self.horizon_frame()))
            .map(|p| {
                let q = self.tf.world_to_pixel(p.position());
                Vec2::new(q.x.round(), q.y.round())
            })
            .collect()
    }
}

/// Largest candidate σ whose 3σ box is free of obstacles and off-road pixels.
pub fn adaptive_sigma(
    goal: Pixel,
    occupied: &[bool],
    drivable: &[bool],
    height: usize,
    width: usize,
    config: &GtConfig,
) -> f64 {
    let blocked = |i: usize| occupied[i] || !drivable[i];
    for &sigma in &config.sigma_candidates {
        let (rows, cols) = support((goal.row as f64, goal.col as f64), sigma, height, width);
        let clear = rows
            .flat_map(|r| cols.clone().map(move |c| r * width + c))
            .all(|i| !blocked(i));
        if clear {
            return sigma;
        }
    }
    config.smallest_sigma()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub heatmap: Heatmap,
    pub weights: WeightMask,
    pub patch: PatchRegion,
    pub goal: GoalLabel,
}

/// Labels `frame` of the log as seen from the recorded ego pose.
pub fn label_frame(
    s: &Scenario,
    frame: usize,
    raster: &RasterConfig,
    config: &GtConfig,
    extra_rotation: f64,
) -> Result<GroundTruth> {
    let ctx = GtContext::new(s, frame, &s.ego_pose(frame), raster, extra_rotation);
    label_with(&ctx, config)
}

/// Picks the expert goal pixel and σ, then builds the heatmap.
pub fn label_with(ctx: &GtContext, config: &GtConfig) -> Result<GroundTruth> {
    let pixel = ctx.expert_goal_pixel()?;
    let occupied = ctx.occupancy();
    let sigma = adaptive_sigma(pixel, &occupied, &ctx.drivable, ctx.height, ctx.width, config);
    build_gt_heatmap(
        ctx,
        GoalLabel {
            pixel,
            sigma_used: sigma,
        },
        config,
    )
}

pub fn build_gt_heatmap(ctx: &GtContext, goal: GoalLabel, config: &GtConfig) -> Result<GroundTruth> {
    let (h, w) = (ctx.height, ctx.width);
    if goal.pixel.row >= h || goal.pixel.col >= w {
        return Err(Error::Label("goal outside the raster".into()));
    }
    if !ctx.drivable[goal.pixel.row * w + goal.pixel.col] {
        return Err(Error::Label("goal is off-road".into()));
    }
    let b = config.baseline;
    let mut neg = Heatmap::filled(h, w, 0.0);
    for c in ctx.obstacle_pixels() {
        let center = (c.y, c.x);
        let (rows, cols) = support(center, config.neg_sigma, h, w);
        for row in rows {
            for col in cols.clone() {
                let g = gaussian_value(row as f64 - center.0, col as f64 - center.1, config.neg_sigma);
                if g > neg.get(row, col) {
                    neg.set(row, col, g);
                }
            }
        }
    }
    let center = (goal.pixel.row as f64, goal.pixel.col as f64);
    let pos = gaussian_kernel(center, goal.sigma_used, h, w);
    let mut heatmap = Heatmap::filled(h, w, 0.0);
    let mut weights = Heatmap::filled(h, w, 1.0);
    for i in 0..h * w {
        if !ctx.drivable[i] {
            continue;
        }
        let v = (b + (1.0 - b) * pos.data[i] - b * neg.data[i]).clamp(0.0, 1.0);
        heatmap.data[i] = v;
        if v == b {
            weights.data[i] = config.drivable_weight;
        }
    }
    Ok(GroundTruth {
        heatmap,
        weights,
        patch: config.patch(h, w),
        goal,
    })
}

/// Highest-valued pixel in the patch; ties go to the smallest row, then column.
pub fn argmax_goal(h: &Heatmap, patch: &PatchRegion) -> Pixel {
    let mut best = Pixel::new(patch.top, patch.left);
    let mut best_v = f64::NEG_INFINITY;
    for row in patch.rows() {
        for col in patch.cols() {
            let v = h.get(row, col);
            if v > best_v {
                best_v = v;
                best = Pixel::new(row, col);
            }
        }
    }
    best
}

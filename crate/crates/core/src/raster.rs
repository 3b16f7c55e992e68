//! Ego-centred bird's-eye-view rendering.
//!
//! Pixel coordinates are continuous `(u, v)` with `u` along columns and `v`
//! along rows; the centre of pixel `(row, col)` sits at `(col, row)`. The ego
//! frame has x forward and y left, so forward maps to +u and left to −v.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose, Vec2};
use crate::heatmap::Heatmap;
use crate::scenario::{LightState, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub height: usize,
    pub width: usize,
    /// Meters per pixel.
    pub resolution: f64,
    /// Ego position as a fraction of `(width, height)`.
    pub ego_anchor: [f64; 2],
    pub n_history: usize,
    /// Half-range of the rendering rotation noise used during augmentation.
    pub orientation_noise: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            height: 128,
            width: 128,
            resolution: 0.5,
            ego_anchor: [0.25, 0.5],
            n_history: 5,
            orientation_noise: std::f64::consts::FRAC_PI_6,
        }
    }
}

pub const MAP_CHANNELS: [&str; 4] = ["lanes", "crosswalks", "red_lights", "route"];

impl RasterConfig {
    pub fn with_size(size: usize) -> Self {
        RasterConfig {
            height: size,
            width: size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("raster size must be positive".into()));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::Config("raster resolution must be positive".into()));
        }
        if !self.ego_anchor.iter().all(|a| (0.0..=1.0).contains(a)) {
            return Err(Error::Config("ego_anchor components must lie in [0, 1]".into()));
        }
        if !(self.orientation_noise >= 0.0) {
            return Err(Error::Config("orientation_noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        2 * (self.n_history + 1) + MAP_CHANNELS.len()
    }

    pub fn channel_names(&self) -> Vec<String> {
        let h = self.n_history + 1;
        (0..h)
            .map(|k| format!("ego_t-{k}"))
            .chain((0..h).map(|k| format!("agents_t-{k}")))
            .chain(MAP_CHANNELS.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn lanes_channel(&self) -> usize {
        2 * (self.n_history + 1)
    }

    pub fn route_channel(&self) -> usize {
        self.lanes_channel() + 3
    }

    /// Continuous pixel coordinates of the ego anchor.
    pub fn anchor_px(&self) -> Vec2 {
        Vec2::new(
            self.ego_anchor[0] * self.width as f64,
            self.ego_anchor[1] * self.height as f64,
        )
    }
}

/// Affine world → pixel map for one ego pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterTransform {
    /// Rendering frame: ego position with yaw reduced by the extra rotation.
    pub frame: Pose,
    pub resolution: f64,
    pub anchor: Vec2,
}

impl RasterTransform {
    pub fn world_to_pixel(&self, p: Vec2) -> Vec2 {
        self.local_to_pixel(self.frame.to_local(p))
    }

    pub fn pixel_to_world(&self, q: Vec2) -> Vec2 {
        self.frame.to_world(self.pixel_to_local(q))
    }

    pub fn local_to_pixel(&self, l: Vec2) -> Vec2 {
        Vec2::new(
            self.anchor.x + l.x / self.resolution,
            self.anchor.y - l.y / self.resolution,
        )
    }

    pub fn pixel_to_local(&self, q: Vec2) -> Vec2 {
        Vec2::new(
            (q.x - self.anchor.x) * self.resolution,
            (self.anchor.y - q.y) * self.resolution,
        )
    }
}

pub fn make_transform(ego: &Pose, config: &RasterConfig, extra_rotation: f64) -> RasterTransform {
    RasterTransform {
        frame: Pose::new(ego.x, ego.y, ego.yaw - extra_rotation),
        resolution: config.resolution,
        anchor: config.anchor_px(),
    }
}

/// Channel-major `C × H × W` tensor with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl BevRaster {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        BevRaster {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }
}

/// Renders `frame` of a scenario from the recorded ego pose.
pub fn rasterize(
    s: &Scenario,
    frame: usize,
    config: &RasterConfig,
    extra_rotation: f64,
) -> Result<BevRaster> {
    if frame < config.n_history || frame >= s.n_frames {
        return Err(Error::Index(format!(
            "frame {frame} outside [{}, {})",
            config.n_history, s.n_frames
        )));
    }
    let history: Vec<Pose> = (0..=config.n_history).map(|k| s.ego_pose(frame - k)).collect();
    Ok(rasterize_with_ego(s, frame, &history, config, extra_rotation))
}

/// Renders `frame` with an explicit ego history, most recent pose first.
/// Used by the closed-loop simulator, where the ego departs from the log.
pub fn rasterize_with_ego(
    s: &Scenario,
    frame: usize,
    ego_history: &[Pose],
    config: &RasterConfig,
    extra_rotation: f64,
) -> BevRaster {
    let (h, w) = (config.height, config.width);
    let tf = make_transform(&ego_history[0], config, extra_rotation);
    let mut r = BevRaster::zeros(config.n_channels(), h, w);
    let hist = config.n_history + 1;
    let fill = |r: &mut BevRaster, c: usize, poly: &[Vec2], value: f32| {
        let px: Vec<Vec2> = poly.iter().map(|p| quantize(tf.world_to_pixel(*p))).collect();
        fill_polygon(r.channel_mut(c), h, w, &px, value);
    };

    for (k, pose) in ego_history.iter().take(hist).enumerate() {
        let value = (hist - k) as f32 / hist as f32;
        let b = s.ego.make_box(*pose);
        fill(&mut r, k, &b.corners(), value);
    }
    for k in 0..hist {
        let Some(f) = frame.checked_sub(k) else { break };
        let value = (hist - k) as f32 / hist as f32;
        for agent in &s.agents {
            if let Some(b) = agent.box_at(f) {
                fill(&mut r, hist + k, &b.corners(), value);
            }
        }
    }

    let lanes = config.lanes_channel();
    for poly in &s.map.drivable_polygons {
        fill(&mut r, lanes, poly, 0.5);
    }
    for lane in &s.map.lanes {
        fill(&mut r, lanes, &lane.polygon(), 1.0);
    }
    for poly in &s.map.crosswalks {
        fill(&mut r, lanes + 1, poly, 1.0);
    }
    for light in &s.map.traffic_lights {
        if light.state_at(frame) == LightState::Red {
            for lane in light.lane_ids.iter().filter_map(|id| s.map.lane(*id)) {
                fill(&mut r, lanes + 2, &lane.polygon(), 1.0);
            }
        }
    }
    for lane in s.map.route() {
        fill(&mut r, lanes + 3, &lane.polygon(), 1.0);
    }
    r
}

/// Per-pixel drivable mask in the given frame, row-major.
pub fn drivable_mask(s: &Scenario, tf: &RasterTransform, height: usize, width: usize) -> Vec<bool> {
    let mut buf = vec![0.0f32; height * width];
    for poly in &s.map.drivable_polygons {
        let px: Vec<Vec2> = poly.iter().map(|p| quantize(tf.world_to_pixel(*p))).collect();
        fill_polygon(&mut buf, height, width, &px, 1.0);
    }
    buf.into_iter().map(|v| v > 0.0).collect()
}

/// Per-pixel occupancy of the given boxes, row-major.
pub fn box_mask(
    boxes: &[OrientedBox],
    tf: &RasterTransform,
    height: usize,
    width: usize,
) -> Vec<bool> {
    let mut buf = vec![0.0f32; height * width];
    for b in boxes {
        let px: Vec<Vec2> = b.corners().iter().map(|p| quantize(tf.world_to_pixel(*p))).collect();
        fill_polygon(&mut buf, height, width, &px, 1.0);
    }
    buf.into_iter().map(|v| v > 0.0).collect()
}

// Snapping vertices to a fine dyadic grid makes pixel-centre tests immune to
// last-bit differences between equivalent world frames.
fn quantize(p: Vec2) -> Vec2 {
    const Q: f64 = 1048576.0;
    Vec2::new((p.x * Q).round() / Q, (p.y * Q).round() / Q)
}

/// Even-odd scanline fill of a pixel-space polygon, sampling pixel centres.
/// Covered pixels take `max(current, value)`.
pub fn fill_polygon(buf: &mut [f32], height: usize, width: usize, poly: &[Vec2], value: f32) {
    let n = poly.len();
    if n < 3 {
        return;
    }
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in poly {
        vmin = vmin.min(p.y);
        vmax = vmax.max(p.y);
    }
    if vmax < 0.0 || vmin > (height - 1) as f64 {
        return;
    }
    let edges: Vec<(Vec2, Vec2)> = (0..n)
        .map(|i| (poly[i], poly[(i + 1) % n]))
        .filter(|(a, b)| a.y != b.y && a.y.max(b.y) >= 0.0 && a.y.min(b.y) <= (height - 1) as f64)
        .collect();
    let row0 = vmin.max(0.0).ceil() as usize;
    let row1 = (vmax.min((height - 1) as f64)).floor() as usize;
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in row0..=row1 {
        let v = row as f64;
        xs.clear();
        for (a, b) in &edges {
            if (a.y <= v) != (b.y <= v) {
                xs.push(a.x + (v - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        let line = &mut buf[row * width..(row + 1) * width];
        for pair in xs.chunks_exact(2) {
            let c0 = pair[0].max(0.0).ceil();
            let c1 = pair[1].min(width as f64).ceil();
            if c1 <= c0 {
                continue;
            }
            for px in &mut line[c0 as usize..c1 as usize] {
                if *px < value {
                    *px = value;
                }
            }
        }
    }
}

/// Writes the heatmap as brightness over a hue coding of the raster's map
/// and agent channels. Off-road pixels are grey, road blue, route green,
/// agents red and the ego yellow; the HSV value is the heatmap itself.
pub fn render_overlay(h: &Heatmap, r: &BevRaster, path: impl AsRef<Path>) -> Result<()> {
    let img = overlay_image(h, r)?;
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::file(path, io),
            other => Error::Image(other.to_string()),
        })
}

pub fn overlay_image(h: &Heatmap, r: &BevRaster) -> Result<image::RgbImage> {
    if h.height != r.height || h.width != r.width {
        return Err(Error::Dimension(format!(
            "heatmap {}x{} vs raster {}x{}",
            h.height, h.width, r.height, r.width
        )));
    }
    if r.channels < 2 + MAP_CHANNELS.len() || (r.channels - MAP_CHANNELS.len()) % 2 != 0 {
        return Err(Error::Dimension(format!(
            "raster has {} channels, not a valid layout",
            r.channels
        )));
    }
    let hist = (r.channels - MAP_CHANNELS.len()) / 2;
    let lanes = 2 * hist;
    let mut img = image::RgbImage::new(r.width as u32, r.height as u32);
    for row in 0..r.height {
        for col in 0..r.width {
            let (hue, sat) = if r.get(0, row, col) > 0.0 {
                (60.0, 0.8)
            } else if r.get(hist, row, col) > 0.0 {
                (0.0, 0.8)
            } else if r.get(lanes + 3, row, col) > 0.0 {
                (120.0, 0.5)
            } else if r.get(lanes, row, col) > 0.0 {
                (220.0, 0.4)
            } else {
                (0.0, 0.0)
            };
            let value = h.get(row, col).clamp(0.0, 1.0);
            img.put_pixel(col as u32, row as u32, image::Rgb(hsv_to_rgb(hue, sat, value)));
        }
    }
    Ok(img)
}

/// HSV to 8-bit RGB; the largest component is always `round(255·v)`.
fn hsv_to_rgb(hue: f64, sat: f64, v: f64) -> [u8; 3] {
    let c = v * sat;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

//! Supervised samples from scenario logs, and their on-disk shard format: a
//! flat little-endian `f32` file of fixed-size records next to a JSON sidecar
//! describing shapes, per-record metadata and sampling weights.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{perturb_trajectory, sample_orientation_noise, SamplerWeights};
use crate::config::{AugmentConfig, DatasetConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::heatmap::{label_with, GtConfig, GtContext, Heatmap, PatchRegion, Pixel};
use crate::nnet::{encode_waypoints, TrainSample, TRAJ_OUTPUTS};
use crate::raster::{rasterize_with_ego, RasterConfig};
use crate::scenario::{
    classify_turn, Scenario, ScenarioCategory, Trajectory, TurnCategory, FRAME_DT, HORIZON_FRAMES,
};

pub const SHARD_VERSION: u32 = 1;
const SCALARS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scenario: String,
    pub category: ScenarioCategory,
    pub frame: usize,
    pub turn: TurnCategory,
    pub sigma: f64,
    pub perturbed: bool,
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub meta: RecordMeta,
    pub sample: TrainSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BuildStats {
    pub records: usize,
    /// Frames dropped because the ground-truth goal was off-road or off-raster.
    pub skipped: usize,
}

fn frame_rng(seed: u64, s: &Scenario, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ s.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((s.category as u64) << 32) | frame as u64);
    rng
}

/// Labels every `stride`-th frame of a scenario that has full history and
/// horizon. Augmentation draws are a pure function of (seed, scenario, frame).
pub fn scenario_records(
    s: &Scenario,
    raster: &RasterConfig,
    gt: &GtConfig,
    augment: Option<&AugmentConfig>,
    dataset: &DatasetConfig,
) -> Result<(Vec<Record>, BuildStats)> {
    let hist = raster.n_history;
    let mut out = Vec::new();
    let mut stats = BuildStats::default();
    if s.n_frames <= hist + HORIZON_FRAMES {
        return Ok((out, stats));
    }
    let threshold = augment.map_or(crate::scenario::DEFAULT_TURN_THRESHOLD, |a| a.turn_threshold);
    for frame in (hist..s.n_frames - HORIZON_FRAMES).step_by(dataset.stride) {
        let mut rng = frame_rng(dataset.seed, s, frame);
        let window = Trajectory {
            poses: (frame - hist..=frame + HORIZON_FRAMES).map(|f| s.ego_pose(f)).collect(),
            dt: FRAME_DT,
        };
        let (poses, perturbed) = match augment {
            Some(a) => {
                let p = perturb_trajectory(&window, &a.perturb, &mut rng)?;
                let changed = p != window;
                (p.poses, changed)
            }
            None => (window.poses, false),
        };
        let rho = match augment {
            Some(a) if a.orientation_noise => sample_orientation_noise(&mut rng, raster.orientation_noise),
            _ => 0.0,
        };
        let current = poses[hist];
        let history: Vec<_> = poses[..=hist].iter().rev().copied().collect();
        let ctx = GtContext::new(s, frame, &current, raster, rho);
        let label = match label_with(&ctx, gt) {
            Ok(l) => l,
            Err(Error::Label(_)) => {
                stats.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let r = rasterize_with_ego(s, frame, &history, raster, rho);
        let goal = label.goal.pixel;
        let future: Vec<_> = poses[hist + 1..]
            .iter()
            .map(|p| ctx.tf.frame.relative(p))
            .collect();
        let speed = poses[hist - 1].position().dist(current.position()) / FRAME_DT;
        let turn = classify_turn(&s.expert_horizon(frame), threshold);
        out.push(Record {
            meta: RecordMeta {
                scenario: s.name(),
                category: s.category,
                frame,
                turn,
                sigma: label.goal.sigma_used,
                perturbed,
                rotation: rho,
            },
            sample: TrainSample {
                raster: r,
                gt: label.heatmap,
                weights: label.weights,
                patch: label.patch,
                goal,
                goal_local: ctx.tf.pixel_to_local(goal.center()),
                speed,
                trajectory: encode_waypoints(&future),
            },
        });
        stats.records += 1;
    }
    Ok((out, stats))
}

/// Per-category counts indexed by [`TurnCategory::index`].
pub fn turn_counts(turns: &[TurnCategory]) -> [usize; 3] {
    let mut c = [0; 3];
    for t in turns {
        c[t.index()] += 1;
    }
    c
}

/// Inverse-frequency weights over the categories that occur; absent
/// categories get weight 0.
pub fn present_category_weights(counts: [usize; 3]) -> Option<SamplerWeights> {
    if counts.iter().all(|c| *c == 0) {
        return None;
    }
    let mut w = [0.0; 3];
    for i in 0..3 {
        if counts[i] > 0 {
            w[i] = 1.0 / counts[i] as f64;
        }
    }
    let total: f64 = w.iter().sum();
    Some(SamplerWeights {
        weights: w.map(|v| v / total),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardMeta {
    pub format_version: u32,
    pub n_records: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `f32` values per record: raster, heatmap, weights, scalars, trajectory.
    pub record_len: usize,
    pub patch: [usize; 4],
    pub raster: RasterConfig,
    pub turn_counts: [usize; 3],
    pub category_weights: Option<SamplerWeights>,
    pub records: Vec<RecordMeta>,
}

impl ShardMeta {
    pub fn record_weights(&self) -> Option<Vec<f64>> {
        self.category_weights.map(|w| {
            self.records
                .iter()
                .map(|r| w.get(r.turn))
                .collect()
        })
    }
}

pub fn record_len(channels: usize, height: usize, width: usize) -> usize {
    channels * height * width + 2 * height * width + SCALARS + TRAJ_OUTPUTS
}

pub fn shard_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("records.bin"), dir.join("records.json"))
}

/// Writes records as one shard. Records must share the raster shape.
pub fn write_shard(dir: impl AsRef<Path>, raster: &RasterConfig, records: &[Record]) -> Result<ShardMeta> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let (bin, json) = shard_paths(dir);
    let (c, h, w) = (raster.n_channels(), raster.height, raster.width);
    let len = record_len(c, h, w);
    let patch = records
        .first()
        .map(|r| r.sample.patch.as_array())
        .unwrap_or([0, 0, h, w]);
    let file = fs::File::create(&bin).map_err(|e| Error::file(&bin, e))?;
    let mut out = BufWriter::new(file);
    let mut buf: Vec<u8> = Vec::with_capacity(4 * len);
    for r in records {
        let s = &r.sample;
        if s.raster.channels != c || s.raster.height != h || s.raster.width != w {
            return Err(Error::Dimension(format!(
                "record {} has raster {}x{}x{}, shard expects {c}x{h}x{w}",
                r.meta.scenario, s.raster.channels, s.raster.height, s.raster.width
            )));
        }
        buf.clear();
        let mut put = |v: f32| buf.extend_from_slice(&v.to_le_bytes());
        s.raster.data.iter().for_each(|v| put(*v));
        s.gt.data.iter().for_each(|v| put(*v as f32));
        s.weights.data.iter().for_each(|v| put(*v as f32));
        for v in [
            s.goal.row as f32,
            s.goal.col as f32,
            s.goal_local.x as f32,
            s.goal_local.y as f32,
            s.speed as f32,
            r.meta.sigma as f32,
        ] {
            put(v);
        }
        s.trajectory.iter().for_each(|v| put(*v));
        debug_assert_eq!(buf.len(), 4 * len);
        out.write_all(&buf).map_err(|e| Error::file(&bin, e))?;
    }
    out.flush().map_err(|e| Error::file(&bin, e))?;
    let turns: Vec<TurnCategory> = records.iter().map(|r| r.meta.turn).collect();
    let counts = turn_counts(&turns);
    let meta = ShardMeta {
        format_version: SHARD_VERSION,
        n_records: records.len(),
        channels: c,
        height: h,
        width: w,
        record_len: len,
        patch,
        raster: raster.clone(),
        turn_counts: counts,
        category_weights: present_category_weights(counts),
        records: records.iter().map(|r| r.meta.clone()).collect(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("shard meta serializes");
    fs::write(&json, text).map_err(|e| Error::file(&json, e))?;
    Ok(meta)
}

pub fn read_shard_meta(dir: impl AsRef<Path>) -> Result<ShardMeta> {
    let (_, json) = shard_paths(dir.as_ref());
    let text = fs::read_to_string(&json).map_err(|e| Error::file(&json, e))?;
    let meta: ShardMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: "shard sidecar".into(),
        message: e.to_string(),
    })?;
    if meta.format_version != SHARD_VERSION {
        return Err(Error::Version {
            found: meta.format_version,
            expected: SHARD_VERSION,
        });
    }
    if meta.records.len() != meta.n_records
        || meta.record_len != record_len(meta.channels, meta.height, meta.width)
    {
        return Err(Error::Parse {
            field: "shard sidecar".into(),
            message: "record count or length is inconsistent".into(),
        });
    }
    Ok(meta)
}

/// Loads all records of a shard.
pub fn read_shard(dir: impl AsRef<Path>) -> Result<(ShardMeta, Vec<TrainSample>)> {
    let dir = dir.as_ref();
    let meta = read_shard_meta(dir)?;
    let (bin, _) = shard_paths(dir);
    let mut file = fs::File::open(&bin).map_err(|e| Error::file(&bin, e))?;
    let expected = (meta.n_records * meta.record_len * 4) as u64;
    let actual = file.metadata().map_err(|e| Error::file(&bin, e))?.len();
    if actual != expected {
        return Err(Error::Parse {
            field: "shard body".into(),
            message: format!("expected {expected} bytes, found {actual}"),
        });
    }
    let (c, h, w) = (meta.channels, meta.height, meta.width);
    let [top, left, ph, pw] = meta.patch;
    let patch = PatchRegion {
        top,
        left,
        height: ph,
        width: pw,
    };
    let mut bytes = vec![0u8; meta.record_len * 4];
    let mut samples = Vec::with_capacity(meta.n_records);
    for _ in 0..meta.n_records {
        file.read_exact(&mut bytes).map_err(|e| Error::file(&bin, e))?;
        let v: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let (raster, rest) = v.split_at(c * h * w);
        let (gt, rest) = rest.split_at(h * w);
        let (weights, rest) = rest.split_at(h * w);
        let (sc, traj) = rest.split_at(SCALARS);
        let map = |d: &[f32]| Heatmap {
            height: h,
            width: w,
            data: d.iter().map(|x| *x as f64).collect(),
        };
        samples.push(TrainSample {
            raster: crate::raster::BevRaster {
                channels: c,
                height: h,
                width: w,
                data: raster.to_vec(),
            },
            gt: map(gt),
            weights: map(weights),
            patch,
            goal: Pixel::new(sc[0] as usize, sc[1] as usize),
            goal_local: Vec2::new(sc[2] as f64, sc[3] as f64),
            speed: sc[4] as f64,
            trajectory: traj.to_vec(),
        });
    }
    Ok((meta, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::decode_waypoints;
    use crate::scenario::{generate_scenario, GeneratorConfig};

    #[test]
    fn records_match_the_log_without_augmentation() {
        let s = generate_scenario(ScenarioCategory::LaneFollowing, 3, &GeneratorConfig::default()).unwrap();
        let raster = RasterConfig::with_size(64);
        let ds = DatasetConfig { stride: 40, seed: 0 };
        let (recs, stats) = scenario_records(&s, &raster, &GtConfig::default(), None, &ds).unwrap();
        assert_eq!(stats.records, recs.len());
        assert!(!recs.is_empty());
        for r in &recs {
            let f = r.meta.frame;
            let ego = s.ego_pose(f);
            let traj = decode_waypoints(&r.sample.trajectory);
            assert_eq!(traj.len(), HORIZON_FRAMES);
            let end = ego.compose(traj.last());
            // Encoded in f32 at 1/10 scale.
            assert!(end.position().dist(s.ego_pose(f + HORIZON_FRAMES).position()) < 1e-4);
            assert!((r.sample.speed - s.ego.speed_at(f)).abs() < 1e-9);
            assert_eq!(r.meta.rotation, 0.0);
            assert_eq!(r.sample.gt.at(r.sample.goal), 1.0);
        }
    }

    #[test]
    fn shard_round_trip() {
        let s = generate_scenario(ScenarioCategory::Intersection, 8, &GeneratorConfig::default()).unwrap();
        let raster = RasterConfig::with_size(32);
        let ds = DatasetConfig { stride: 25, seed: 4 };
        let aug = AugmentConfig::default();
        let (recs, _) = scenario_records(&s, &raster, &GtConfig::default(), Some(&aug), &ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let meta = write_shard(dir.path(), &raster, &recs).unwrap();
        assert_eq!(meta.n_records, recs.len());
        let (back_meta, samples) = read_shard(dir.path()).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(samples.len(), recs.len());
        for (a, r) in samples.iter().zip(&recs) {
            assert_eq!(a.raster, r.sample.raster);
            assert_eq!(a.goal, r.sample.goal);
            assert_eq!(a.trajectory, r.sample.trajectory);
            assert_eq!(a.patch, r.sample.patch);
            for (x, y) in a.gt.data.iter().zip(&r.sample.gt.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let again = scenario_records(&s, &raster, &GtConfig::default(), Some(&aug), &ds).unwrap().0;
        assert_eq!(again, recs);
    }

    #[test]
    fn empty_shard() {
        let dir = tempfile::tempdir().unwrap();
        let raster = RasterConfig::with_size(16);
        let meta = write_shard(dir.path(), &raster, &[]).unwrap();
        assert_eq!(meta.n_records, 0);
        assert_eq!(meta.category_weights, None);
        assert!(read_shard(dir.path()).unwrap().1.is_empty());
    }

    #[test]
    fn present_weights_skip_missing_categories() {
        let w = present_category_weights([10, 0, 5]).unwrap();
        assert_eq!(w.weights[1], 0.0);
        assert!((w.weights[0] * 10.0 - w.weights[2] * 5.0).abs() < 1e-15);
    }
}

#![allow(dead_code)]

use heatplan::config::RunConfig;
use heatplan::nnet::TrainSample;
use heatplan::pipeline::{build_records, generate_suite};
use heatplan::raster::RasterConfig;

/// 16x16 rasters at 2 m per pixel, small enough to train in seconds.
pub fn toy_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.raster = RasterConfig {
        resolution: 2.0,
        ..RasterConfig::with_size(16)
    };
    cfg.dataset.stride = 10;
    cfg.train.batch_size = 8;
    cfg.train.lr = 1e-3;
    cfg.train.steps = 500;
    cfg
}

pub fn toy_samples(cfg: &RunConfig, n: usize) -> Vec<TrainSample> {
    let suite = generate_suite(cfg, 2, 11).unwrap();
    let (recs, _) = build_records(&suite, cfg, false).unwrap();
    assert!(recs.len() >= n, "only {} toy records", recs.len());
    recs.into_iter().take(n).map(|r| r.sample).collect()
}

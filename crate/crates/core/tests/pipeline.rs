mod common;

use heatplan::cli::learned_planner;
use heatplan::dataset::{read_shard, write_shard};
use heatplan::heatmap::label_frame;
use heatplan::nnet::{load_checkpoint, save_checkpoint};
use heatplan::pipeline::{build_records, generate_suite, new_checkpoint, train_loop};
use heatplan::raster::rasterize;
use heatplan::scenario::{generate_scenario, load_scenario, save_scenario, ScenarioCategory, HORIZON_FRAMES};
use heatplan::sim::{simulate, SimConfig};
use proptest::prelude::*;

/// The shard stores every value as f32.
fn as_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| *x as f32 as f64).collect()
}

#[test]
fn scenario_to_planner_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::toy_config();
    cfg.train.steps = 30;

    let suite = generate_suite(&cfg, 1, 21).unwrap();
    let reloaded: Vec<_> = suite
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = dir.path().join(format!("{i}.json"));
            save_scenario(s, &p).unwrap();
            load_scenario(&p).unwrap()
        })
        .collect();
    assert_eq!(reloaded, suite);

    let (recs, stats) = build_records(&reloaded, &cfg, true).unwrap();
    assert_eq!(stats.records, recs.len());
    let meta = write_shard(dir.path().join("shard"), &cfg.raster, &recs).unwrap();
    let (back_meta, samples) = read_shard(dir.path().join("shard")).unwrap();
    assert_eq!(back_meta.n_records, meta.n_records);
    assert_eq!(samples.len(), recs.len());
    for (a, r) in samples.iter().zip(&recs) {
        let b = &r.sample;
        assert_eq!(a.raster, b.raster);
        assert_eq!(a.gt.data, as_f32(&b.gt.data));
        assert_eq!(a.weights.data, as_f32(&b.weights.data));
        assert_eq!(a.patch, b.patch);
        assert_eq!(a.goal, b.goal);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.speed, b.speed as f32 as f64);
        assert_eq!(a.goal_local.x, b.goal_local.x as f32 as f64);
    }

    let mut ck = new_checkpoint(&cfg).unwrap();
    let weights = meta.record_weights();
    let mut last = f64::NAN;
    train_loop(&samples, weights.as_deref(), &mut ck, |_, s, _| {
        last = s.total;
        Ok(())
    })
    .unwrap();
    assert!(last.is_finite());
    assert_eq!(ck.adam.step, 30);

    let path = dir.path().join("m.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ck);

    let planner = learned_planner(loaded, &cfg, true).unwrap();
    let ep = simulate(&suite[0], &planner, &SimConfig::default()).unwrap();
    assert_eq!(ep.metrics.planner_faults, 0);
    assert!(ep.metrics.progress.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raster_and_labels_stay_in_unit_range(cat in 0usize..4, seed in 0u64..5000, frac in 0.0f64..1.0) {
        let cfg = common::toy_config();
        let s = generate_scenario(ScenarioCategory::ALL[cat], seed, &cfg.generator).unwrap();
        let lo = cfg.raster.n_history;
        let hi = s.n_frames - HORIZON_FRAMES - 1;
        let frame = lo + ((hi - lo) as f64 * frac) as usize;
        let r = rasterize(&s, frame, &cfg.raster, 0.0).unwrap();
        prop_assert!(r.data.iter().all(|v| (0.0..=1.0).contains(v)));
        if let Ok(gt) = label_frame(&s, frame, &cfg.raster, &cfg.gt, 0.0) {
            prop_assert!(gt.heatmap.data.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(gt.weights.data.iter().all(|v| *v >= 0.0));
        }
    }
}

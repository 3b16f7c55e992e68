//! End-to-end helpers shared by the CLI, the tests and the Python bindings:
//! building a dataset from a scenario suite and running the training loop.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{scenario_records, BuildStats, Record};
use crate::error::{Error, Result};
use crate::nnet::{batch_indices, train_step, AdamState, Checkpoint, Model, StepStats, TrainSample};
use crate::scenario::{generate_scenario, Scenario, ScenarioCategory};

/// `per_category` scenarios of every category, seeds `seed..seed + per_category`.
pub fn generate_suite(cfg: &RunConfig, per_category: usize, seed: u64) -> Result<Vec<Scenario>> {
    let jobs: Vec<(ScenarioCategory, u64)> = ScenarioCategory::ALL
        .iter()
        .flat_map(|c| (0..per_category as u64).map(move |i| (*c, seed + i)))
        .collect();
    jobs.par_iter()
        .map(|(c, s)| generate_scenario(*c, *s, &cfg.generator))
        .collect()
}

/// Labelled records of every scenario, in input order.
pub fn build_records(scenarios: &[Scenario], cfg: &RunConfig, augment: bool) -> Result<(Vec<Record>, BuildStats)> {
    let aug = augment.then_some(&cfg.augment);
    let parts: Vec<(Vec<Record>, BuildStats)> = scenarios
        .par_iter()
        .map(|s| scenario_records(s, &cfg.raster, &cfg.gt, aug, &cfg.dataset))
        .collect::<Result<_>>()?;
    let mut stats = BuildStats::default();
    let mut out = Vec::new();
    for (r, st) in parts {
        stats.records += st.records;
        stats.skipped += st.skipped;
        out.extend(r);
    }
    Ok((out, stats))
}

/// Fresh model and optimizer for `cfg`.
pub fn new_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let model: Model<f32> = Model::new(cfg.raster.n_channels(), cfg.net.clone())?;
    let adam = AdamState::new(model.n_params(), &cfg.train);
    Ok(Checkpoint {
        model,
        adam,
        raster: cfg.raster.clone(),
        train: cfg.train.clone(),
    })
}

/// Trains until the optimizer has taken `ck.train.steps` steps, continuing
/// from whatever step the checkpoint holds. `hook` sees every step after the
/// update; returning an error stops training.
pub fn train_loop(
    samples: &[TrainSample],
    weights: Option<&[f64]>,
    ck: &mut Checkpoint,
    mut hook: impl FnMut(u64, &StepStats, &Checkpoint) -> Result<()>,
) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(Error::Dimension(format!(
                "{} sampling weights for {} records",
                w.len(),
                samples.len()
            )));
        }
    }
    let cfg = ck.train.clone();
    cfg.validate()?;
    let weights = if cfg.balance { weights } else { None };
    while ck.adam.step < cfg.steps {
        let step = ck.adam.step;
        let idx = batch_indices(samples.len(), weights, cfg.batch_size, cfg.seed, step)?;
        let batch: Vec<&TrainSample> = idx.iter().map(|i| &samples[*i]).collect();
        let stats = train_step(&batch, &mut ck.model, &mut ck.adam, &cfg)?;
        hook(ck.adam.step, &stats, ck)?;
    }
    Ok(())
}

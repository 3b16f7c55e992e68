//! The `heatplan` command line. Values come from defaults, then the
//! `--config` file, then flags; a flag always wins.
//!
//! Exit codes: 0 success, 2 I/O, 3 numeric divergence, 4 shape or config
//! mismatch, 1 anything else.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{read_shard, write_shard, ShardMeta};
use crate::error::{Error, Result};
use crate::heatmap::{argmax_goal, label_frame, Heatmap};
use crate::nnet::{load_checkpoint, save_checkpoint, Checkpoint, Model};
use crate::pipeline::{build_records, generate_suite, new_checkpoint, train_loop};
use crate::raster::{rasterize, render_overlay, RasterConfig};
use crate::scenario::{
    generate_scenario, load_scenario, save_scenario, Scenario, ScenarioCategory, TurnCategory,
};
use crate::sim::{
    evaluate_suite, make_ood_suite, ExpertReplay, LearnedPlanner, OraclePlanner, Planner, Report,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "heatplan", version, about = "Heatmap-based neural motion planner")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenarios and an index manifest.
    Gen(GenArgs),
    /// Label scenarios into a training shard.
    Dataset(DatasetArgs),
    /// Train the planner network on a shard.
    Train(TrainArgs),
    /// Closed-loop evaluation of a planner on a scenario suite.
    Eval(EvalArgs),
    /// Render a ground-truth or predicted heatmap over the raster.
    Viz(VizArgs),
    /// Time rasterization and network inference.
    Bench(BenchArgs),
    /// Print the summary table of a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenarios per category unless overridden per category.
    #[arg(long, default_value_t = 10)]
    pub per_category: usize,
    #[arg(long)]
    pub lane_following: Option<usize>,
    #[arg(long)]
    pub lane_changing: Option<usize>,
    #[arg(long)]
    pub intersection: Option<usize>,
    #[arg(long)]
    pub flexibility: Option<usize>,
    /// First scenario seed; scenario i of a category uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Label every n-th frame.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raster side in pixels (square).
    #[arg(long)]
    pub size: Option<usize>,
    /// Disable orientation noise and trajectory perturbation.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint path; the loss log goes to `<out>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain MSE instead of the relaxed hourglass loss.
    #[arg(long)]
    pub mse: bool,
    /// Sample records uniformly instead of balancing turn categories.
    #[arg(long)]
    pub no_balance: bool,
    /// Continue from the checkpoint at `--out` if it exists.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, conflicts_with_all = ["oracle", "expert"])]
    pub checkpoint: Option<PathBuf>,
    /// Plan with the ground-truth heatmap.
    #[arg(long, conflicts_with = "expert")]
    pub oracle: bool,
    /// Replay the logged expert.
    #[arg(long)]
    pub expert: bool,
    /// Drive to the predicted goal with the kinematic planner instead of the
    /// trajectory head.
    #[arg(long)]
    pub use_kinematic: bool,
    /// Evaluate perturbed copies of the suite.
    #[arg(long)]
    pub ood: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub frame: usize,
    /// Show the network prediction instead of the ground truth.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub category: ScenarioCategory,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub format_version: u32,
    pub counts: BTreeMap<String, usize>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub raster_median_ms: f64,
    pub inference_median_ms: f64,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::File { .. } | Error::Image(_) => 2,
        Error::NumericDivergence { .. } => 3,
        Error::Dimension(_) | Error::Config(_) | Error::Parse { .. } | Error::Version { .. } => 4,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        // The global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(&mut cfg, &a).map(|_| ()),
        Command::Dataset(a) => cmd_dataset(&mut cfg, &a).map(|_| ()),
        Command::Train(a) => cmd_train(&mut cfg, &a),
        Command::Eval(a) => cmd_eval(&mut cfg, &a).map(|_| ()),
        Command::Viz(a) => cmd_viz(&mut cfg, &a),
        Command::Bench(a) => cmd_bench(&mut cfg, &a).map(|_| ()),
        Command::Report(a) => {
            let r = read_report(&a.report)?;
            println!("{}", r.summary_table());
            Ok(())
        }
    }
}

fn set_size(cfg: &mut RunConfig, size: Option<usize>) {
    if let Some(n) = size {
        cfg.raster.height = n;
        cfg.raster.width = n;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub fn cmd_gen(cfg: &mut RunConfig, a: &GenArgs) -> Result<SuiteManifest> {
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out).map_err(|e| Error::file(&a.out, e))?;
    let count = |c: ScenarioCategory| {
        match c {
            ScenarioCategory::LaneFollowing => a.lane_following,
            ScenarioCategory::LaneChanging => a.lane_changing,
            ScenarioCategory::Intersection => a.intersection,
            ScenarioCategory::Flexibility => a.flexibility,
        }
        .unwrap_or(a.per_category)
    };
    let mut entries = Vec::new();
    let mut counts = BTreeMap::new();
    for c in ScenarioCategory::ALL {
        let n = count(c);
        counts.insert(c.name().to_string(), n);
        for i in 0..n as u64 {
            let s = generate_scenario(c, cfg.seed + i, &cfg.generator)?;
            let file = format!("{}.json", s.name());
            save_scenario(&s, a.out.join(&file))?;
            entries.push(ManifestEntry {
                file,
                category: c,
                seed: s.seed,
            });
        }
    }
    let manifest = SuiteManifest {
        format_version: 1,
        counts,
        entries,
    };
    write_json(&a.out.join(MANIFEST_FILE), &manifest)?;
    println!("wrote {} scenarios to {}", manifest.entries.len(), a.out.display());
    Ok(manifest)
}

/// Scenarios listed in the directory's manifest, or every `*.json` file in
/// name order when there is none.
pub fn load_suite(dir: &Path) -> Result<Vec<Scenario>> {
    let manifest = dir.join(MANIFEST_FILE);
    let files: Vec<PathBuf> = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::file(&manifest, e))?;
        let m: SuiteManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            field: "suite manifest".into(),
            message: e.to_string(),
        })?;
        m.entries.iter().map(|e| dir.join(&e.file)).collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::file(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    };
    files.iter().map(load_scenario).collect()
}

/// Empirical category shares of `draws` weighted draws.
pub fn sampled_ratio(meta: &ShardMeta, draws: usize, seed: u64) -> Result<[f64; 3]> {
    let mut counts = [0usize; 3];
    if meta.n_records == 0 {
        return Ok([0.0; 3]);
    }
    let weights = meta.record_weights();
    let idx = crate::nnet::batch_indices(meta.n_records, weights.as_deref(), draws, seed, u64::MAX)?;
    for i in idx {
        counts[meta.records[i].turn.index()] += 1;
    }
    Ok(counts.map(|c| c as f64 / draws as f64))
}

pub fn cmd_dataset(cfg: &mut RunConfig, a: &DatasetArgs) -> Result<ShardMeta> {
    if let Some(s) = a.stride {
        cfg.dataset.stride = s;
    }
    if let Some(s) = a.seed {
        cfg.dataset.seed = s;
    }
    set_size(cfg, a.size);
    cfg.validate()?;
    let suite = load_suite(&a.scenarios)?;
    if suite.is_empty() {
        log::warn!("no scenarios in {}", a.scenarios.display());
        eprintln!("warning: no scenarios in {}; writing an empty shard", a.scenarios.display());
    }
    let (records, stats) = build_records(&suite, cfg, !a.no_augment)?;
    let meta = write_shard(&a.out, &cfg.raster, &records)?;
    if stats.skipped > 0 {
        log::info!("skipped {} frames with off-road or off-raster goals", stats.skipped);
    }
    println!("records {} (skipped {})", meta.n_records, stats.skipped);
    for c in ScenarioCategory::ALL {
        let n = meta.records.iter().filter(|r| r.category == c).count();
        println!("  {:<16} {n}", c.name());
    }
    let ratio = sampled_ratio(&meta, 30_000, cfg.dataset.seed)?;
    for t in TurnCategory::ALL {
        println!(
            "  {:<16} {:>6} records, sampled share {:.3}",
            format!("{t:?}"),
            meta.turn_counts[t.index()],
            ratio[t.index()]
        );
    }
    Ok(meta)
}

pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

/// Keeps the header and the rows for steps `<= step`.
fn truncate_loss_log(path: &Path, step: u64) -> Result<String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::file(path, e)),
    };
    let mut out = String::from("step,total,heatmap,trajectory\n");
    for line in text.lines().skip(1) {
        let s: Option<u64> = line.split(',').next().and_then(|v| v.parse().ok());
        if s.is_some_and(|s| s <= step) {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn cmd_train(cfg: &mut RunConfig, a: &TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(v) = a.steps {
        t.steps = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if a.mse {
        t.loss = crate::loss::LossKind::Mse;
    }
    if a.no_balance {
        t.balance = false;
    }
    let (meta, samples) = read_shard(&a.dataset)?;
    cfg.raster = meta.raster.clone();
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config(format!("dataset {} is empty", a.dataset.display())));
    }
    let mut ck = if a.resume && a.out.exists() {
        let mut ck = load_checkpoint(&a.out)?;
        if ck.raster != meta.raster {
            return Err(Error::Dimension(
                "checkpoint raster configuration differs from the dataset".into(),
            ));
        }
        let step = ck.adam.step;
        ck.train = cfg.train.clone();
        ck.adam.lr = cfg.train.lr;
        log::info!("resuming from step {step}");
        ck
    } else {
        new_checkpoint(cfg)?
    };
    let log_path = loss_log_path(&a.out);
    let mut log_text = truncate_loss_log(&log_path, ck.adam.step)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let weights = meta.record_weights();
    let every = cfg.train.checkpoint_every.max(1);
    let log_every = cfg.train.log_every.max(1);
    let started = Instant::now();
    let result = train_loop(&samples, weights.as_deref(), &mut ck, |step, s, ck| {
        use std::fmt::Write as _;
        let _ = writeln!(log_text, "{step},{},{},{}", s.total, s.heatmap, s.trajectory);
        if step % log_every == 0 {
            println!(
                "step {step:>7} loss {:.5} (heatmap {:.5}, trajectory {:.5}) {:.0}s",
                s.total,
                s.heatmap,
                s.trajectory,
                started.elapsed().as_secs_f64()
            );
        }
        if step % every == 0 {
            save_checkpoint(ck, &a.out)?;
            fs::write(&log_path, &log_text).map_err(|e| Error::file(&log_path, e))?;
        }
        Ok(())
    });
    fs::write(&log_path, &log_text).map_err(|e| Error::file(&log_path, e))?;
    result?;
    save_checkpoint(&ck, &a.out)?;
    println!("saved {} at step {}", a.out.display(), ck.adam.step);
    Ok(())
}

fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: "report".into(),
        message: e.to_string(),
    })
}

/// Planner for a checkpoint, checking that it matches the configured raster.
pub fn learned_planner(ck: Checkpoint, cfg: &RunConfig, use_head: bool) -> Result<LearnedPlanner> {
    ck.model.check_input(cfg.raster.n_channels(), cfg.raster.height, cfg.raster.width)?;
    let mut p = LearnedPlanner::new(ck.model, ck.raster, cfg.gt.clone());
    p.kinematic = cfg.kinematic.clone();
    p.use_head = use_head;
    Ok(p)
}

pub fn cmd_eval(cfg: &mut RunConfig, a: &EvalArgs) -> Result<Report> {
    if let Some(s) = a.seed {
        cfg.ood.seed = s;
    }
    let planner: Box<dyn Planner> = if a.expert {
        Box::new(ExpertReplay)
    } else if a.oracle {
        Box::new(OraclePlanner {
            raster: cfg.raster.clone(),
            gt: cfg.gt.clone(),
            kinematic: cfg.kinematic.clone(),
        })
    } else {
        let path = a
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Config("eval needs --checkpoint, --oracle or --expert".into()))?;
        let ck = load_checkpoint(path)?;
        if cfg.config_raster_unset() {
            cfg.raster = ck.raster.clone();
        } else if ck.raster != cfg.raster {
            return Err(Error::Dimension(
                "checkpoint raster configuration differs from the run configuration".into(),
            ));
        }
        Box::new(learned_planner(ck, cfg, !a.use_kinematic)?)
    };
    cfg.validate()?;
    let mut suite = load_suite(&a.scenarios)?;
    if a.ood {
        suite = make_ood_suite(&suite, &cfg.ood)?;
    }
    let report = evaluate_suite(&suite, planner.as_ref(), &cfg.sim)?;
    if let Some(p) = a.report.as_ref().or(cfg.paths.report.as_ref()) {
        write_json(p, &report)?;
    }
    println!("{}", report.summary_table());
    Ok(report)
}

impl RunConfig {
    /// True when the raster section is still the default, so a checkpoint
    /// may supply it.
    fn config_raster_unset(&self) -> bool {
        self.raster == RasterConfig::default()
    }
}

pub fn cmd_viz(cfg: &mut RunConfig, a: &VizArgs) -> Result<()> {
    set_size(cfg, a.size);
    let s = load_scenario(&a.scenario)?;
    let (heat, raster) = match &a.checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if a.size.is_none() {
                cfg.raster = ck.raster.clone();
            }
            cfg.validate()?;
            check_frame(&s, a.frame, &cfg.raster)?;
            let r = rasterize(&s, a.frame, &cfg.raster, 0.0)?;
            ck.model.check_input(r.channels, r.height, r.width)?;
            let (h, _) = ck.model.fcn_forward(&r)?;
            let px = argmax_goal(&h, &cfg.gt.patch(r.height, r.width));
            println!("predicted goal pixel row {} col {}", px.row, px.col);
            (h, r)
        }
        None => {
            cfg.validate()?;
            check_frame(&s, a.frame, &cfg.raster)?;
            let gt = label_frame(&s, a.frame, &cfg.raster, &cfg.gt, 0.0)?;
            println!(
                "goal pixel row {} col {}, sigma {}",
                gt.goal.pixel.row, gt.goal.pixel.col, gt.goal.sigma_used
            );
            (gt.heatmap, rasterize(&s, a.frame, &cfg.raster, 0.0)?)
        }
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    render_overlay(&heat, &raster, &a.out)
}

fn check_frame(s: &Scenario, frame: usize, raster: &RasterConfig) -> Result<()> {
    let last = s.n_frames.saturating_sub(crate::scenario::HORIZON_FRAMES + 1);
    if frame < raster.n_history || frame > last {
        return Err(Error::Index(format!(
            "frame {frame} outside {}..={last}",
            raster.n_history
        )));
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock milliseconds of rasterization and of the heatmap
/// network forward pass, over `frames` frames drawn from a fixed suite.
pub fn bench(cfg: &RunConfig, frames: usize, seed: u64) -> Result<BenchReport> {
    let suite = generate_suite(cfg, 2, seed)?;
    let model: Model<f32> = Model::new(cfg.raster.n_channels(), cfg.net.clone())?;
    let jobs: Vec<(&Scenario, usize)> = suite
        .iter()
        .flat_map(|s| (cfg.raster.n_history..s.n_frames).map(move |f| (s, f)))
        .cycle()
        .take(frames.max(1))
        .collect();
    let mut raster_ms = Vec::with_capacity(jobs.len());
    let mut infer_ms = Vec::with_capacity(jobs.len());
    for (s, f) in jobs {
        let t = Instant::now();
        let r = rasterize(s, f, &cfg.raster, 0.0)?;
        raster_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        let (h, _): (Heatmap, _) = model.fcn_forward(&r)?;
        infer_ms.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(h);
    }
    Ok(BenchReport {
        frames: raster_ms.len(),
        height: cfg.raster.height,
        width: cfg.raster.width,
        raster_median_ms: median(raster_ms),
        inference_median_ms: median(infer_ms),
    })
}

pub fn cmd_bench(cfg: &mut RunConfig, a: &BenchArgs) -> Result<BenchReport> {
    set_size(cfg, a.size);
    cfg.validate()?;
    let r = bench(cfg, a.frames, a.seed.unwrap_or(cfg.seed))?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "frames {} at {}x{}", r.frames, r.height, r.width);
    let _ = writeln!(out, "rasterization median {:.3} ms", r.raster_median_ms);
    let _ = writeln!(out, "inference median {:.3} ms", r.inference_median_ms);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&Error::file("x", std::io::Error::other("e"))), 2);
        assert_eq!(exit_code(&Error::NumericDivergence { step: 3 }), 3);
        assert_eq!(exit_code(&Error::Dimension("d".into())), 4);
        assert_eq!(exit_code(&Error::Config("c".into())), 4);
        assert_eq!(exit_code(&Error::Label("l".into())), 1);
    }

    #[test]
    fn loss_log_truncation_keeps_earlier_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.loss.csv");
        fs::write(&p, "step,total,heatmap,trajectory\n1,1,1,0\n2,2,2,0\n3,3,3,0\n").unwrap();
        let t = truncate_loss_log(&p, 2).unwrap();
        assert_eq!(t, "step,total,heatmap,trajectory\n1,1,1,0\n2,2,2,0\n");
        assert_eq!(truncate_loss_log(&dir.path().join("none"), 5).unwrap().lines().count(), 1);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

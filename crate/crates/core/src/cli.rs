//! Command-line surface. Every subcommand reads an optional TOML file, applies
//! `--set key=value` overrides (flags are shorthands for overrides) and writes
//! CSV, TOML or checkpoint files. A failure prints one JSON line to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, DatasetSpec};
use crate::error::{io_at, Error, Result};
use crate::eval::{case_study, dataset_srcc, difficulty_histogram, model_curve_frames, rotation_invariance, sample_pairs, scale_invariance};
use crate::field::{FieldKind, VolumeField};
use crate::io::manifest::{data_root, resolve};
use crate::io::{load_checkpoint, load_config, open_manifest, read_volume_stack, save_checkpoint};
use crate::metrics::{DistanceMetric, Mse, PearsonDistance, Psnr, Ssim};
use crate::nn::gradcheck;
use crate::nn::{LearnedMetric, MetricModel, ModelConfig};
use crate::training::{normalization_samples, train_with_progress, TrainConfig, TrainSequence};

#[derive(Parser, Debug)]
#[command(name = "volmetric", version, about = "Similarity metrics for volumetric simulation data")]
pub struct Cli {
    /// Worker threads (fixes the thread count for reproducible runs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Configuration override `key.path=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset and its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (relative paths resolve against the data root).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Calibrate Δ for a dataset configuration and print the result.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a metric model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sequence SRCC of a metric on datasets.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// mse, psnr, ssim, pearson or a checkpoint file.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotation and scale sweeps.
    Invariance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output prefix; writes `<prefix>_rotation.csv` and `<prefix>_scale.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trajectory case study over a frame stack.
    Casestudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        metric: Option<String>,
        /// VSIM stack with axes (t, c, z, y, x); synthetic frames when absent.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Difficulty histogram of datasets.
    Histogram {
        #[command(flatten)]
        common: Common,
        #[arg(long = "dataset")]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every differentiable op.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    /// Named architecture, used when `model` is absent.
    pub variant: String,
    pub model: Option<ModelConfig>,
    /// Seed of the parameter initialization.
    pub init_seed: u64,
    /// Training and validation manifests.
    pub train: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub output: PathBuf,
    /// Loss log; `<output>.log.csv` when absent. Epoch timings go next to it.
    pub log: Option<PathBuf>,
    pub training: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            variant: "default".into(),
            model: None,
            init_seed: 0,
            train: Vec::new(),
            validation: Vec::new(),
            output: "model.vsck".into(),
            log: None,
            training: TrainConfig::default(),
        }
    }
}

impl TrainRun {
    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.model {
            Some(m) => Ok(m.clone()),
            None => ModelConfig::variant(&self.variant),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateRun {
    pub metric: String,
    pub datasets: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceRun {
    pub metric: String,
    pub dataset: PathBuf,
    pub pairs: usize,
    pub seed: u64,
    pub rotation: bool,
    pub step_degrees: f64,
    pub scale: bool,
    pub factors: Vec<f64>,
    pub output: PathBuf,
}

impl Default for InvarianceRun {
    fn default() -> Self {
        Self {
            metric: "mse".into(),
            dataset: PathBuf::new(),
            pairs: 8,
            seed: 0,
            rotation: true,
            step_degrees: 5.0,
            scale: true,
            factors: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            output: "invariance".into(),
        }
    }
}

/// Frames whose Pearson trajectory lies on the similarity curve with c = 10^exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFrames {
    pub frames: usize,
    pub resolution: usize,
    pub exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticFrames {
    fn default() -> Self {
        Self { frames: 20, resolution: 64, exponent: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyRun {
    pub metric: String,
    pub frames: Option<PathBuf>,
    pub kind: FieldKind,
    /// Keep every `stride`-th cell per axis at ingestion.
    pub spatial_stride: usize,
    /// Keep every `temporal_stride`-th frame at ingestion.
    pub temporal_stride: usize,
    pub synthetic: SyntheticFrames,
    pub output: Option<PathBuf>,
}

impl Default for CaseStudyRun {
    fn default() -> Self {
        Self {
            metric: "pearson".into(),
            frames: None,
            kind: FieldKind::Velocity,
            spatial_stride: 1,
            temporal_stride: 1,
            synthetic: SyntheticFrames::default(),
            output: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramRun {
    pub datasets: Vec<PathBuf>,
    pub bin: f64,
    pub output: Option<PathBuf>,
}

impl Default for HistogramRun {
    fn default() -> Self {
        Self { datasets: Vec::new(), bin: 0.05, output: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckRun {
    pub seed: u64,
}

/// Builds a metric from its name or a checkpoint path.
pub fn metric_from_name(name: &str) -> Result<Box<dyn DistanceMetric>> {
    Ok(match name {
        "mse" => Box::new(Mse),
        "psnr" => Box::new(Psnr::default()),
        "ssim" => Box::new(Ssim::default()),
        "pearson" => Box::new(PearsonDistance),
        "" => return Err(Error::Config("no metric given".into())),
        path => {
            let p = resolve(Path::new(path));
            if !p.is_file() {
                return Err(Error::Config(format!("`{path}` is neither a metric name nor a checkpoint file")));
            }
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
            Box::new(LearnedMetric::new(load_checkpoint(&p)?.model, id))
        }
    })
}

fn push_opt<T: std::fmt::Display>(overrides: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        overrides.push(format!("{key}={v}"));
    }
}

fn quoted(p: &Path) -> String {
    toml::Value::String(p.to_string_lossy().into_owned()).to_string()
}

fn config<T: serde::de::DeserializeOwned>(common: &Common, extra: Vec<String>) -> Result<T> {
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    load_config(common.config.as_deref(), &overrides)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).map_err(io_at(p))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn json_line(v: &serde_json::Value) {
    println!("{v}");
}

fn load_training(paths: &[PathBuf]) -> Result<Vec<TrainSequence>> {
    let mut out = Vec::new();
    for p in paths {
        let (m, base) = open_manifest(p)?;
        out.extend(m.load_training(&base)?);
    }
    Ok(out)
}

fn subsample(f: &VolumeField, stride: usize) -> Result<VolumeField> {
    if stride <= 1 {
        return Ok(f.clone());
    }
    let dims = f.dims().map(|d| d.div_ceil(stride));
    Ok(VolumeField::from_fn(f.kind(), f.channels(), dims, |c, z, y, x| f.get(c, z * stride, y * stride, x * stride)))
}

pub fn run_generate(spec: &DatasetSpec, out: &Path) -> Result<PathBuf> {
    let root = data_root();
    let data = generate_dataset(spec, root.as_deref())?;
    crate::io::DatasetManifest::write_dataset(&resolve(out), spec, &data)
}

pub fn run_train(run: &TrainRun) -> Result<serde_json::Value> {
    if run.train.is_empty() {
        return Err(Error::Config("no training manifests given".into()));
    }
    let train_set = load_training(&run.train)?;
    let val_set = load_training(&run.validation)?;
    let mut model = MetricModel::new(run.model_config()?, run.init_seed)?;
    model.init_feature_normalization(normalization_samples(&train_set, model.config.input_channels))?;
    let outcome = train_with_progress(model, &train_set, &val_set, &run.training, |row| {
        eprintln!("{}", serde_json::json!({ "epoch": row.epoch, "iteration": row.iteration, "val_loss": row.val_loss, "val_srcc": row.val_srcc }));
    })?;
    let output = resolve(&run.output);
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&output, &outcome.model, Some(&run.training))?;
    let log = run.log.as_ref().map(|p| resolve(p)).unwrap_or_else(|| output.with_extension("log.csv"));
    write_or_print(Some(&log), &outcome.log.to_csv())?;
    let timing = log.with_extension("timing.csv");
    write_or_print(Some(&timing), &outcome.log.timing_csv())?;
    Ok(serde_json::json!({
        "checkpoint": output,
        "log": log,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.epochs_run,
        "iterations": outcome.log.rows.len(),
        "parameters": outcome.model.param_count(),
    }))
}

fn run_evaluate(run: &EvaluateRun) -> Result<()> {
    if run.datasets.is_empty() {
        return Err(Error::Config("no datasets given".into()));
    }
    let metric = metric_from_name(&run.metric)?;
    let mut csv = String::new();
    for p in &run.datasets {
        let (m, base) = open_manifest(p)?;
        let report = dataset_srcc(metric.as_ref(), &m.id, &m.load_states(&base)?)?;
        let body = report.to_csv();
        csv.push_str(if csv.is_empty() { &body } else { body.split_once('\n').map_or("", |b| b.1) });
        eprintln!("{}", serde_json::json!({ "dataset": m.id, "metric": report.metric, "mean_srcc": report.mean, "degenerate": report.degenerate_count() }));
    }
    write_or_print(run.output.as_deref(), &csv)
}

fn run_invariance(run: &InvarianceRun) -> Result<()> {
    let metric = metric_from_name(&run.metric)?;
    let (m, base) = open_manifest(&run.dataset)?;
    let pairs = sample_pairs(&m.load_states(&base)?, run.pairs, run.seed)?;
    let prefix = resolve(&run.output).to_string_lossy().into_owned();
    if run.rotation {
        let r = rotation_invariance(metric.as_ref(), &pairs, run.step_degrees, run.seed)?;
        write_or_print(Some(Path::new(&format!("{prefix}_rotation.csv"))), &r.to_csv())?;
        json_line(&serde_json::json!({ "sweep": "rotation", "metric": r.metric, "max_abs_deviation": r.max_abs_deviation() }));
    }
    if run.scale {
        let r = scale_invariance(metric.as_ref(), &pairs, &run.factors)?;
        write_or_print(Some(Path::new(&format!("{prefix}_scale.csv"))), &r.to_csv())?;
        json_line(&serde_json::json!({
            "sweep": "scale",
            "metric": r.metric,
            "max_abs_deviation": r.max_abs_deviation(),
            "increasing_fraction": r.increasing_fraction(),
        }));
    }
    Ok(())
}

fn run_casestudy(run: &CaseStudyRun) -> Result<()> {
    let metric = metric_from_name(&run.metric)?;
    let frames = match &run.frames {
        Some(p) => read_volume_stack(&resolve(p), run.kind)?
            .iter()
            .step_by(run.temporal_stride.max(1))
            .map(|f| subsample(f, run.spatial_stride))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let s = &run.synthetic;
            model_curve_frames([s.resolution; 3], s.frames, 10f64.powf(s.exponent), s.seed)?
        }
    };
    let cs = case_study(metric.as_ref(), &frames)?;
    write_or_print(run.output.as_deref(), &cs.to_csv())?;
    eprintln!("{}", serde_json::json!({ "metric": cs.metric, "srcc_a": cs.srcc_a, "srcc_b": cs.srcc_b, "exponent": cs.fit.exponent }));
    Ok(())
}

fn run_histogram(run: &HistogramRun) -> Result<()> {
    if run.datasets.is_empty() {
        return Err(Error::Config("no datasets given".into()));
    }
    let mut values = Vec::new();
    for p in &run.datasets {
        values.extend(open_manifest(p)?.0.difficulties());
    }
    let h = difficulty_histogram(&values, run.bin)?;
    write_or_print(run.output.as_deref(), &h.to_csv())?;
    eprintln!("{}", serde_json::json!({ "count": values.len(), "mean": h.mean, "std": h.std, "skew": h.skew }));
    Ok(())
}

/// Returns whether every check passed.
fn run_gradcheck(run: &GradcheckRun) -> Result<bool> {
    let checks = gradcheck::run_all(run.seed)?;
    for c in &checks {
        json_line(&serde_json::json!({
            "check": c.name,
            "max_rel_error": c.max_rel_error,
            "entries": c.entries,
            "skipped": c.skipped,
            "passed": c.passed(),
        }));
    }
    Ok(checks.iter().all(|c| c.passed()))
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Generate { common, seed, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "seed", seed);
            let spec: DatasetSpec = config(&common, extra)?;
            let path = run_generate(&spec, &out)?;
            json_line(&serde_json::json!({ "manifest": path }));
        }
        Command::Calibrate { common, seed, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "seed", seed);
            let spec: DatasetSpec = config(&common, extra)?;
            let result = spec.source(data_root().as_deref())?.calibrate()?;
            let text = serde_json::to_string_pretty(&result).map_err(|e| Error::Config(e.to_string()))?;
            write_or_print(out.as_deref(), &(text + "\n"))?;
        }
        Command::Train { common, seed, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "training.seed", seed);
            push_opt(&mut extra, "output", out.as_deref().map(quoted));
            let run: TrainRun = config(&common, extra)?;
            json_line(&run_train(&run)?);
        }
        Command::Evaluate { common, metric, datasets, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "metric", metric.map(|m| toml::Value::String(m).to_string()));
            if !datasets.is_empty() {
                let list: Vec<String> = datasets.iter().map(|p| quoted(p)).collect();
                extra.push(format!("datasets=[{}]", list.join(",")));
            }
            push_opt(&mut extra, "output", out.as_deref().map(quoted));
            run_evaluate(&config(&common, extra)?)?;
        }
        Command::Invariance { common, metric, dataset, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "metric", metric.map(|m| toml::Value::String(m).to_string()));
            push_opt(&mut extra, "dataset", dataset.as_deref().map(quoted));
            push_opt(&mut extra, "output", out.as_deref().map(quoted));
            run_invariance(&config(&common, extra)?)?;
        }
        Command::Casestudy { common, metric, frames, out } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "metric", metric.map(|m| toml::Value::String(m).to_string()));
            push_opt(&mut extra, "frames", frames.as_deref().map(quoted));
            push_opt(&mut extra, "output", out.as_deref().map(quoted));
            run_casestudy(&config(&common, extra)?)?;
        }
        Command::Histogram { common, datasets, out } => {
            let mut extra = Vec::new();
            if !datasets.is_empty() {
                let list: Vec<String> = datasets.iter().map(|p| quoted(p)).collect();
                extra.push(format!("datasets=[{}]", list.join(",")));
            }
            push_opt(&mut extra, "output", out.as_deref().map(quoted));
            run_histogram(&config(&common, extra)?)?;
        }
        Command::Gradcheck { common, seed } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "seed", seed);
            return run_gradcheck(&config(&common, extra)?);
        }
    }
    Ok(true)
}

/// Exit code for an error: 2 for configuration (usage) problems, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({ "error": "Config", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}

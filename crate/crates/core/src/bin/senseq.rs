use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use senseq::dataset::{
    event_range, load_events, parse_timestamp, split_days, write_events, TimesliceSequence,
};
use senseq::error::{Error, Result};
use senseq::eval::{self, CvOptions, MpcaAggregation};
use senseq::features::{
    featurize, DeltaTEncoding, FeatureConfig, Granularity, Representation, TodEncoding,
};
use senseq::models::{Model, ModelDocument, ModelKind, ModelOptions};
use senseq::{container, synth};

#[derive(Parser, Debug)]
#[command(name = "senseq", version, about = "Activity recognition from binary sensor streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert interval events into the minute-timeslice dataset file.
    Rasterize(RasterizeArgs),
    /// Leave-one-day-out cross-validation.
    Cv(CvArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Decode a dataset with a trained model.
    Predict(PredictArgs),
    /// Write a synthetic events corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
struct RasterizeArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Output dataset (gzip CSV); metadata is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// First minute, e.g. 2008-02-25T00:00 (default: earliest event start).
    #[arg(long)]
    start: Option<String>,
    /// End minute, exclusive (default: latest event end).
    #[arg(long)]
    end: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FeatureArgs {
    #[arg(long = "repr", value_enum, default_value = "raw")]
    representation: Representation,
    #[arg(long, default_value_t = 1)]
    concat: usize,
    #[arg(long, value_enum, default_value = "none")]
    tod: TodEncoding,
    #[arg(long, value_enum, default_value = "none")]
    deltat: DeltaTEncoding,
    #[arg(long, value_enum, default_value = "minute")]
    granularity: Granularity,
}

impl FeatureArgs {
    fn config(&self) -> Result<FeatureConfig> {
        let cfg = FeatureConfig::new(self.representation)
            .with_concat(self.concat)
            .with_tod(self.tod)
            .with_deltat(self.deltat)
            .with_granularity(self.granularity);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "nb")]
    model: ModelKind,
    /// CRF L2 regularization strength.
    #[arg(long, default_value_t = 1.0)]
    reg: f64,
    /// Additive smoothing for emissions, transitions and durations.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// HSMM maximum explicit duration (longer runs share the last bucket).
    #[arg(long, default_value_t = 120)]
    dmax: usize,
    /// CRF L-BFGS iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl ModelArgs {
    fn options(&self) -> Result<ModelOptions> {
        let mut opts = ModelOptions::default().with_alpha(self.alpha);
        opts.d_max = self.dmax;
        opts.lambda_reg = self.reg;
        opts.lbfgs.max_iter = self.max_iter;
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Args, Debug, Serialize)]
struct CvArgs {
    /// Dataset file written by `rasterize`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "fold")]
    mpca_aggregation: MpcaAggregation,
    /// Worker threads for folds (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also render the pooled confusion matrix as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Leave this day (0-based) out of training.
    #[arg(long)]
    exclude_day: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    /// Only decode this day (0-based).
    #[arg(long)]
    day: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SynthKind {
    House,
    Separable,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "house")]
    kind: SynthKind,
    #[arg(long, default_value_t = 25)]
    days: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Activities for the separable corpus (Idle included).
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Writes events.csv and meta.json here.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct RunSnapshot<'a, A: Serialize> {
    senseq_version: &'static str,
    command: &'static str,
    args: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<FeatureConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_options: Option<ModelOptions>,
}

fn write_snapshot<A: Serialize>(
    path: &Path,
    command: &'static str,
    args: &A,
    features: Option<FeatureConfig>,
    model_options: Option<ModelOptions>,
) -> Result<()> {
    let snap = RunSnapshot {
        senseq_version: env!("CARGO_PKG_VERSION"),
        command,
        args,
        features,
        model_options,
    };
    let text = serde_json::to_string_pretty(&snap)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        context: path.display().to_string(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn rasterize_cmd(a: &RasterizeArgs) -> Result<()> {
    let (events, meta) = load_events(&a.events, &a.meta)?;
    let (mut start, mut end) = if a.start.is_none() || a.end.is_none() {
        event_range(&events)?
    } else {
        (0, 0)
    };
    if let Some(s) = &a.start {
        start = parse_timestamp(s).map_err(|m| Error::InvalidRange(format!("--start: {m}")))?;
    }
    if let Some(e) = &a.end {
        end = parse_timestamp(e).map_err(|m| Error::InvalidRange(format!("--end: {m}")))?;
    }
    let seq = senseq::dataset::rasterize(&events, &meta, start, end)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    container::write_dataset(&a.out, &seq, &meta)?;
    let mut snap = a.out.clone().into_os_string();
    snap.push(".config.json");
    write_snapshot(Path::new(&snap), "rasterize", a, None, None)?;
    println!("T: {}", seq.len());
    println!("N: {}", meta.sensor_count());
    println!("C: {}", meta.activity_count());
    println!("days: {}", seq.day_boundaries.len());
    Ok(())
}

fn cv_cmd(a: &CvArgs) -> Result<()> {
    let cfg = a.features.config()?;
    let model_options = a.model.options()?;
    if a.jobs == Some(0) {
        return Err(Error::Domain("--jobs must be at least 1".into()));
    }
    create_dir(&a.out_dir)?;
    write_snapshot(&a.out_dir.join("config.json"), "cv", a, Some(cfg), Some(model_options))?;

    let (seq, meta) = container::read_dataset(&a.data)?;
    let days = split_days(&seq);
    let opts = CvOptions {
        model: a.model.model,
        model_options,
        mpca_aggregation: a.mpca_aggregation,
        jobs: a.jobs,
    };
    let report = eval::cross_validate(&days, meta.activity_count(), &cfg, &opts)?;
    report.save_json(a.out_dir.join("report.json"))?;
    eval::write_confusion_csv(
        &report.pooled_confusion,
        &meta.activity_names,
        a.out_dir.join("confusion.csv"),
    )?;
    if a.svg {
        eval::render_confusion_svg(
            &report.pooled_confusion,
            &meta.activity_names,
            a.out_dir.join("confusion.svg"),
        )?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn select_days(days: Vec<TimesliceSequence>, keep: impl Fn(usize) -> bool) -> Vec<TimesliceSequence> {
    days.into_iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, d)| d)
        .collect()
}

fn check_day(day: Option<usize>, n_days: usize) -> Result<()> {
    match day {
        Some(d) if d >= n_days => Err(Error::InvalidRange(format!(
            "day {d} out of range, dataset has {n_days} days"
        ))),
        _ => Ok(()),
    }
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = a.features.config()?;
    let opts = a.model.options()?;
    create_dir(&a.out_dir)?;
    write_snapshot(&a.out_dir.join("config.json"), "train", a, Some(cfg), Some(opts))?;

    let (seq, meta) = container::read_dataset(&a.data)?;
    let days = split_days(&seq);
    check_day(a.exclude_day, days.len())?;
    let days = select_days(days, |i| Some(i) != a.exclude_day);
    let data = days
        .iter()
        .map(|d| featurize(d, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let model = Model::fit(a.model.model, &data, meta.activity_count(), &opts)?;
    ModelDocument::new(&model, cfg)?.save(a.out_dir.join("model.json"))?;

    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (day, f) in days.iter().zip(&data) {
        let (p, t) = eval::evaluate_day(&model, day, f)?;
        pred.extend(p);
        truth.extend(t);
    }
    println!("training accuracy: {:.2}", 100.0 * eval::accuracy(&pred, &truth)?);
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let cfg = a.features.config()?;
    create_dir(&a.out_dir)?;
    write_snapshot(&a.out_dir.join("config.json"), "predict", a, Some(cfg), None)?;

    let doc = ModelDocument::load(&a.model)?;
    let (seq, meta) = container::read_dataset(&a.data)?;
    doc.check_compatible(&cfg, meta.sensor_count(), meta.activity_count())?;
    let model = doc.to_model()?;

    let days = split_days(&seq);
    check_day(a.day, days.len())?;
    let days = select_days(days, |i| a.day.map_or(true, |d| d == i));

    let path = a.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["timeslice_index", "true", "pred"])?;
    let (mut all_pred, mut all_truth) = (Vec::new(), Vec::new());
    for day in &days {
        let f = featurize(day, &cfg)?;
        let (p, t) = eval::evaluate_day(&model, day, &f)?;
        all_pred.extend(p);
        all_truth.extend(t);
    }
    for (i, (t, p)) in all_truth.iter().zip(&all_pred).enumerate() {
        w.write_record([i.to_string(), t.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    println!("accuracy: {:.2}", 100.0 * eval::accuracy(&all_pred, &all_truth)?);
    Ok(())
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    if a.days == 0 {
        return Err(Error::InvalidRange("--days must be at least 1".into()));
    }
    if matches!(a.kind, SynthKind::Separable) && a.classes < 2 {
        return Err(Error::Domain("--classes must be at least 2".into()));
    }
    create_dir(&a.out_dir)?;
    write_snapshot(&a.out_dir.join("config.json"), "synth", a, None, None)?;
    let corpus = match a.kind {
        SynthKind::House => synth::house_like(a.days, a.seed),
        SynthKind::Separable => synth::separable(a.days, a.classes, a.seed),
    };
    write_events(a.out_dir.join("events.csv"), &corpus.events, &corpus.meta)?;
    corpus.meta.save(a.out_dir.join("meta.json"))?;
    println!("events: {}", corpus.events.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rasterize(a) => rasterize_cmd(a),
        Command::Cv(a) => cv_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

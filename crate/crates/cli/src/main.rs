//! `csihum`: command-line front end for the humidity-sensing pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every command echoes
//! its effective configuration, seed included, as one JSON line on stderr.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use csi_humidity::classify::{Algorithm, Hyperparams, TrainedModel};
use csi_humidity::denoise::{denoise_pipeline, DenoiseConfig};
use csi_humidity::eval::{evaluate, resolution_sweep, EvalConfig, SplitMode};
use csi_humidity::features::{build_dataset, Dataset};
use csi_humidity::ingest::parse_capture;
use csi_humidity::labels::{bin_all, bin_humidity, Resolution};
use csi_humidity::pipeline::{self, Preprocess};
use csi_humidity::series::{interpolate_humidity, read_humidity_log, CsiSeries};
use csi_humidity::synth::{generate_series, write_capture, ScenarioConfig};
use csi_humidity::Error;

/// Environment variable naming the directory that holds `default.toml`.
const CONFIG_DIR_ENV: &str = "CSIHUM_CONFIG_DIR";
const DEFAULT_SCENARIO: &str = "default.toml";

#[derive(Debug, Parser)]
#[command(name = "csihum", version, about = "WiFi CSI humidity sensing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic chamber run as a pcap capture.
    Synth(SynthArgs),
    /// Parse a pcap capture into an amplitude series CSV.
    Parse(ParseArgs),
    /// Downsample, Hampel-filter and smooth an amplitude series.
    Denoise(DenoiseArgs),
    /// Turn an amplitude series into 249-wide feature rows.
    Featurize(FeaturizeArgs),
    /// Fit a classifier on a dataset and save it as JSON.
    Train(TrainArgs),
    /// Classify the rows of a dataset with a saved model.
    Predict(PredictArgs),
    /// Repeated random-split evaluation of one algorithm.
    Evaluate(EvaluateArgs),
    /// Evaluate several algorithms at several resolutions.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario TOML; defaults to $CSIHUM_CONFIG_DIR/default.toml, then to the built-in scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Capture to write.
    #[arg(long)]
    out: PathBuf,
    /// Measured amplitudes with hygrometer labels, as series CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Noise-free amplitudes with the true humidity, as series CSV.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Probe-request disturbance log, JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Hygrometer log (CSV with `t` and `humidity` columns) interpolated onto the frame times.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct DenoiseOpts {
    /// Frames averaged per output sample.
    #[arg(long, default_value_t = 8)]
    downsample: usize,
    /// Hampel half-window, in downsampled samples.
    #[arg(long = "hampel-window", default_value_t = 30)]
    hampel_window: usize,
    /// Hampel threshold in scaled-MAD units.
    #[arg(long = "hampel-k", default_value_t = 3.0)]
    hampel_k: f64,
    /// Moving-average length.
    #[arg(long, default_value_t = 10)]
    ma: usize,
}

impl DenoiseOpts {
    fn config(&self) -> DenoiseConfig {
        DenoiseConfig {
            downsample_window: self.downsample,
            hampel_half_window: self.hampel_window,
            hampel_threshold: self.hampel_k,
            ma_window: self.ma,
        }
    }
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: DenoiseOpts,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a `label` column binned at this resolution.
    #[arg(long)]
    resolution: Option<u32>,
}

#[derive(Debug, Clone, Args)]
struct HyperOpts {
    /// Neighbours for KNN.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// SVM box constraint.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// SMO stopping tolerance on the KKT gap.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// SMO iteration cap per binary problem.
    #[arg(long = "max-iter", default_value_t = 1_000_000)]
    max_iter: usize,
}

impl HyperOpts {
    fn params(&self) -> Hyperparams {
        Hyperparams {
            k: self.k,
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Knn,
    Lsvm,
    Qsvm,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Knn => Algorithm::Knn,
            AlgoArg::Lsvm => Algorithm::Lsvm,
            AlgoArg::Qsvm => Algorithm::Qsvm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Random,
    Block,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    resolution: u32,
    #[command(flatten)]
    hyper: HyperOpts,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where evaluation rows come from: a dataset file, or a scenario that is
/// synthesized and preprocessed in memory.
#[derive(Debug, Clone, Args)]
struct SourceOpts {
    /// Dataset CSV.
    #[arg(long = "in", conflicts_with_all = ["scenario", "no_denoise"])]
    input: Option<PathBuf>,
    /// Scenario TOML to synthesize; the default scenario when neither this nor --in is given.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Skip de-noising of synthesized data (keep one raw frame per block).
    #[arg(long = "no-denoise")]
    no_denoise: bool,
}

#[derive(Debug, Clone, Args)]
struct EvalOpts {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    rounds: u64,
    /// Round r splits with seed + r.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long = "train-fraction", default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Random)]
    split: SplitArg,
    #[command(flatten)]
    hyper: HyperOpts,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    source: SourceOpts,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    resolution: u32,
    #[command(flatten)]
    eval: EvalOpts,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-round table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Pooled confusion matrix.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceOpts,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [AlgoArg::Knn, AlgoArg::Lsvm, AlgoArg::Qsvm])]
    algos: Vec<AlgoArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [2u32, 5, 10],
          value_parser = clap::value_parser!(u32).range(1..))]
    resolutions: Vec<u32>,
    #[command(flatten)]
    eval: EvalOpts,
    /// Sweep JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// One row per (algorithm, resolution).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Pipeline(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Pipeline(_) => 2,
        }
    }
}

macro_rules! from_module_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(e.into())
            }
        })*
    };
}

from_module_errors!(
    csi_humidity::ingest::IngestError,
    csi_humidity::series::SeriesError,
    csi_humidity::denoise::DenoiseError,
    csi_humidity::features::FeatureError,
    csi_humidity::classify::ClassifyError,
    csi_humidity::eval::EvalError,
    csi_humidity::synth::SynthError,
);

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        })
    }
}

fn require_out_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        }),
        _ => Ok(()),
    }
}

fn check_paths(inputs: &[&Path], outputs: &[Option<&Path>]) -> Result<()> {
    inputs.iter().try_for_each(|p| require_file(p))?;
    outputs
        .iter()
        .flatten()
        .try_for_each(|p| require_out_dir(p))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(io_err(p)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn echo(command: &str, config: serde_json::Value) {
    eprintln!("{}", json!({ "command": command, "config": config }));
}

fn resolution(n: u32) -> Result<Resolution> {
    Resolution::new(n).ok_or_else(|| CliError::Usage("--resolution must be at least 1".into()))
}

/// Explicit path, else `$CSIHUM_CONFIG_DIR/default.toml`, else built-in.
fn load_scenario(explicit: Option<&Path>) -> Result<ScenarioConfig> {
    if let Some(p) = explicit {
        return Ok(ScenarioConfig::load(p)?);
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => {
            let p = Path::new(&dir).join(DEFAULT_SCENARIO);
            require_file(&p)?;
            Ok(ScenarioConfig::load(&p)?)
        }
        None => Ok(ScenarioConfig::default()),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Ok(Dataset::read_csv(open(path)?)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    check_paths(
        &a.scenario.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
        &[
            Some(&a.out),
            a.csv.as_deref(),
            a.clean.as_deref(),
            a.log.as_deref(),
        ],
    )?;
    let mut cfg = load_scenario(a.scenario.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    echo("synth", json!({ "scenario": cfg, "seed": cfg.seed }));
    let run = generate_series(&cfg)?;
    let mut out = write_capture(&run.noisy, create(&a.out)?)?;
    out.flush().map_err(io_err(&a.out))?;
    if let Some(p) = &a.csv {
        run.noisy.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.clean {
        run.clean.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.log {
        let log = json!({ "seed": cfg.seed, "events": run.log.events });
        write_text(
            Some(p),
            &serde_json::to_string_pretty(&log).expect("log serializes"),
        )?;
    }
    Ok(())
}

fn parse(a: ParseArgs) -> Result<()> {
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.labels.as_deref());
    check_paths(&inputs, &[Some(&a.out)])?;
    echo(
        "parse",
        json!({ "in": a.input, "out": a.out, "labels": a.labels }),
    );
    let bytes = std::fs::read(&a.input).map_err(io_err(&a.input))?;
    let capture = parse_capture(&bytes)?;
    eprintln!(
        "{}",
        json!({ "frames": capture.frames.len(), "tally": capture.tally })
    );
    let mut series = pipeline::capture_series(&capture)?;
    if let Some(p) = &a.labels {
        let (t, h) = read_humidity_log(open(p)?)?;
        let humidity = interpolate_humidity(series.times(), &t, &h)?;
        series = series.with_humidity(humidity)?;
    }
    let seq: Vec<u64> = capture.frames.iter().map(|f| u64::from(f.seq_no)).collect();
    series.write_csv_with_seq(create(&a.out)?, Some(&seq))?;
    Ok(())
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    check_paths(&[&a.input], &[Some(&a.out)])?;
    let cfg = a.opts.config();
    cfg.validate()?;
    echo(
        "denoise",
        json!({ "in": a.input, "out": a.out, "denoise": cfg }),
    );
    let series = CsiSeries::read_csv(open(&a.input)?)?;
    denoise_pipeline(&series, &cfg)?.write_csv(create(&a.out)?)?;
    Ok(())
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    check_paths(&[&a.input], &[Some(&a.out)])?;
    let res = a.resolution.map(resolution).transpose()?;
    echo(
        "featurize",
        json!({ "in": a.input, "out": a.out, "resolution": res }),
    );
    let series = CsiSeries::read_csv(open(&a.input)?)?;
    let data = build_dataset(&series)?;
    let labels: Option<Vec<i64>> = res.map(|r| {
        bin_all(&data.humidity(), r)
            .into_iter()
            .map(|l| l.0)
            .collect()
    });
    data.write_csv(create(&a.out)?, labels.as_deref())?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    check_paths(&[&a.input], &[Some(&a.out)])?;
    let res = resolution(a.resolution)?;
    let algo = Algorithm::from(a.algo);
    let hp = a.hyper.params();
    echo(
        "train",
        json!({ "in": a.input, "out": a.out, "algorithm": algo, "resolution": res, "hyperparams": hp }),
    );
    let data = read_dataset(&a.input)?;
    let model = TrainedModel::fit(data.matrix().view(), &data.humidity(), algo, res, hp)?;
    model.save(&a.out)?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    check_paths(&[&a.model, &a.input], &[a.out.as_deref()])?;
    echo(
        "predict",
        json!({ "model": a.model, "in": a.input, "out": a.out }),
    );
    let model = TrainedModel::load(&a.model)?;
    let data = read_dataset(&a.input)?;
    let predicted = model.predict_matrix(data.matrix().view())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "humidity", "label", "predicted"])?;
    let mut hits = 0usize;
    for (row, p) in data.rows.iter().zip(&predicted) {
        let truth = bin_humidity(row.humidity, model.resolution);
        hits += usize::from(truth == *p);
        w.write_record([
            row.t.to_string(),
            row.humidity.to_string(),
            truth.to_string(),
            p.to_string(),
        ])?;
    }
    let bytes = w.into_inner().expect("in-memory writer");
    match &a.out {
        Some(p) => std::fs::write(p, bytes).map_err(io_err(p))?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(io_err(Path::new("<stdout>")))?,
    }
    if !predicted.is_empty() {
        eprintln!(
            "{}",
            json!({ "rows": predicted.len(), "accuracy": hits as f64 / predicted.len() as f64 })
        );
    }
    Ok(())
}

fn load_source(source: &SourceOpts) -> Result<(Dataset, serde_json::Value)> {
    if let Some(p) = &source.input {
        return Ok((read_dataset(p)?, json!({ "in": p })));
    }
    let scenario = load_scenario(source.scenario.as_deref())?;
    let pre = if source.no_denoise {
        Preprocess::disabled()
    } else {
        Preprocess::default()
    };
    let echo = json!({ "scenario": scenario, "denoise": !source.no_denoise });
    Ok((pipeline::synthetic_dataset(&scenario, &pre)?, echo))
}

fn source_inputs(source: &SourceOpts) -> Vec<&Path> {
    source
        .input
        .iter()
        .chain(&source.scenario)
        .map(PathBuf::as_path)
        .collect()
}

fn eval_config(algo: Algorithm, res: Resolution, o: &EvalOpts) -> Result<EvalConfig> {
    if !(o.train_fraction > 0.0 && o.train_fraction < 1.0) {
        return Err(CliError::Usage(
            "--train-fraction must lie strictly between 0 and 1".into(),
        ));
    }
    Ok(EvalConfig {
        hyperparams: o.hyper.params(),
        rounds: o.rounds as usize,
        seed: o.seed,
        train_fraction: o.train_fraction,
        split_mode: match o.split {
            SplitArg::Random => SplitMode::Random,
            SplitArg::Block => SplitMode::Block,
        },
        ..EvalConfig::new(algo, res)
    })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    check_paths(
        &source_inputs(&a.source),
        &[a.out.as_deref(), a.csv.as_deref(), a.confusion.as_deref()],
    )?;
    let cfg = eval_config(a.algo.into(), resolution(a.resolution)?, &a.eval)?;
    let (data, source) = load_source(&a.source)?;
    echo("evaluate", json!({ "source": source, "eval": cfg }));
    let report = evaluate(&data, &cfg)?;
    if let Some(p) = &a.csv {
        report.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.confusion {
        report.write_confusion_csv(create(p)?)?;
    }
    write_text(a.out.as_deref(), &report.to_json())
}

fn sweep(a: SweepArgs) -> Result<()> {
    check_paths(
        &source_inputs(&a.source),
        &[a.out.as_deref(), a.csv.as_deref()],
    )?;
    let algos: Vec<Algorithm> = a.algos.iter().map(|&x| x.into()).collect();
    let resolutions = a
        .resolutions
        .iter()
        .map(|&n| resolution(n))
        .collect::<Result<Vec<_>>>()?;
    let base = eval_config(Algorithm::Knn, resolutions[0], &a.eval)?;
    let (data, source) = load_source(&a.source)?;
    echo(
        "sweep",
        json!({ "source": source, "algorithms": algos, "resolutions": resolutions, "eval": base }),
    );
    let report = resolution_sweep(&data, &algos, &resolutions, &base)?;
    if let Some(p) = &a.csv {
        report.write_csv(create(p)?)?;
    }
    write_text(a.out.as_deref(), &report.to_json())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Parse(a) => parse(a),
        Command::Denoise(a) => denoise(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are successful runs
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use drmdit::data::{apply_minmax, fit_minmax, load_csv, skew_filter, split, synth_generate, FeatureConfig, SynthSpec};
use drmdit::detect::{emit_report, reference_median, score, select_band, ScoreBand, ScoreReport, ScoringMode};
use drmdit::train::{fit, grid_search, Checkpoint, FeatureSpec, LossWeights, TrainConfig, DEFAULT_SIGMA_GRID};
use drmdit::{Error, Result};

#[derive(Parser)]
#[command(name = "drmdit", version, about = "Robust-MD information-theoretic autoencoder anomaly detector")]
struct Cli {
    /// Seed for every random choice; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the normal rows of a CSV and write a checkpoint.
    Train(TrainArgs),
    /// Score a CSV with a checkpoint and write a report and trace.
    Score(ScoreArgs),
    /// Score labeled data, pick or apply a band, and report metrics.
    Eval(EvalArgs),
    /// Grid-search the kernel bandwidth (and optionally alpha).
    Sweep(SweepArgs),
    /// Generate the synthetic near/far benchmark.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Feature-selection JSON {columns, label_column, normal_values}.
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Training config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Keep rows with skewed features.
    #[arg(long)]
    no_skew_filter: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "robust_md")]
    mode: ScoringMode,
    /// `low,high`; defaults to the band stored in the checkpoint.
    #[arg(long)]
    band: Option<ScoreBand>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Label column name.
    #[arg(long)]
    labels: String,
    /// Comma-separated label values treated as normal.
    #[arg(long, value_delimiter = ',')]
    normal_values: Option<Vec<String>>,
    /// `auto` or `low,high`.
    #[arg(long, default_value = "auto")]
    band: String,
    #[arg(long, default_value = "robust_md")]
    mode: ScoringMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIGMA_GRID)]
    sigma: Vec<f64>,
    /// MD weights to try; beta is 1 - alpha.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Label column; labeled validation is scored by AUC.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
}

fn feature_config(path: Option<&Path>) -> Result<FeatureConfig> {
    path.map_or_else(|| Ok(FeatureConfig::default()), FeatureConfig::load)
}

fn train_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config: TrainConfig = match path {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run_train(args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let features = feature_config(args.input.features.as_deref())?;
    let config = train_config(args.config.as_deref(), seed)?;
    let (data, stats) = load_csv(&args.input.data, &features)?;
    let normal = data.select(&data.normal_indices());
    info!("loaded {} rows ({} dropped), {} normal", stats.rows_read, stats.rows_dropped, normal.rows());
    let train = if args.no_skew_filter {
        normal
    } else {
        let filtered = skew_filter(&normal.features)?;
        info!("skew filter dropped {} rows", filtered.dropped);
        normal.select(&filtered.kept)
    };
    let record = fit_minmax(&train.features)?;
    let x = apply_minmax(&train.features, &record, false)?;
    let model = fit(&x, &config)?;
    let spec = FeatureSpec { columns: train.feature_names.clone(), normalization: record };
    Checkpoint::from_model(&model, Some(spec)).save(&args.out)?;
    if let Some(last) = model.loss_history.last() {
        info!("final epoch loss {:.6}", last.loss.total);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Load a checkpoint and the matching, normalized features of a CSV.
fn load_scoring_inputs(
    model_path: &Path,
    data_path: &Path,
    label_column: Option<String>,
    normal_values: Option<Vec<String>>,
) -> Result<(drmdit::train::TrainedModel, drmdit::Matrix, Option<Vec<u8>>)> {
    let (model, spec) = Checkpoint::load(model_path)?.into_model()?;
    let mut config = FeatureConfig { label_column, ..FeatureConfig::default() };
    if let Some(v) = normal_values {
        config.normal_values = v;
    }
    if let Some(s) = &spec {
        config.columns = s.columns.clone();
    }
    let (data, _) = load_csv(data_path, &config)?;
    let x = match &spec {
        Some(s) => apply_minmax(&data.features, &s.normalization, false)?,
        None => data.features.clone(),
    };
    Ok((model, x, data.labels))
}

fn write_report(report: &ScoreReport, out: &Path) -> Result<()> {
    let (json, csv) = emit_report(report, out)?;
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

fn run_score(args: &ScoreArgs) -> Result<()> {
    let (model, x, _) = load_scoring_inputs(&args.model, &args.data, None, None)?;
    let scores = score(&model, &x, args.mode)?;
    let band = match args.band {
        Some(b) => b,
        None => match (&model.score_reference, args.mode) {
            (Some(r), ScoringMode::RobustMd) => r.default_band,
            _ => return Err(Error::Parameter(format!("--band is required for {} scoring", args.mode))),
        },
    };
    let report = ScoreReport::build(args.mode, scores, reference_median(&model, args.mode)?, band, None)?;
    write_report(&report, &args.out)
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let (model, x, labels) =
        load_scoring_inputs(&args.model, &args.data, Some(args.labels.clone()), args.normal_values.clone())?;
    let labels = labels.expect("label column requested");
    let scores = score(&model, &x, args.mode)?;
    let band = if args.band == "auto" {
        select_band(&scores, &labels)?.band
    } else {
        args.band.parse()?
    };
    let report = ScoreReport::build(args.mode, scores, reference_median(&model, args.mode)?, band, Some(labels))?;
    if let Some(m) = &report.metrics {
        println!(
            "mode {} band [{}, {}] accuracy {:.4} precision {:.4} recall {:.4} auc {:.4}",
            args.mode, band.low, band.high, m.metrics.accuracy, m.metrics.precision, m.metrics.recall, m.auc
        );
    }
    write_report(&report, &args.out)
}

fn run_sweep(args: &SweepArgs, seed: Option<u64>) -> Result<()> {
    let mut features = feature_config(args.input.features.as_deref())?;
    if args.labels.is_some() {
        features.label_column = args.labels.clone();
    }
    let base = train_config(args.config.as_deref(), seed)?;
    let (data, _) = load_csv(&args.input.data, &features)?;
    let parts = split(&data, args.train_fraction, base.seed)?;
    let train = parts.train.select(&parts.train.normal_indices());
    let record = fit_minmax(&train.features)?;
    let x_train = apply_minmax(&train.features, &record, false)?;
    let x_val = apply_minmax(&parts.validation.features, &record, false)?;
    let weights: Vec<LossWeights> = match &args.alpha {
        Some(alphas) => alphas
            .iter()
            .map(|&a| LossWeights { alpha: a, beta: 1.0 - a, gamma: base.weights.gamma })
            .collect(),
        None => vec![base.weights],
    };
    let labels = parts.validation.labels.as_deref();
    let result = grid_search(&x_train, &x_val, labels, &args.sigma, &weights, &base)?;

    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["sigma", "alpha", "beta", "gamma", "metric", "score"])?;
    for row in &result.table {
        let metric = serde_json::to_value(row.metric)?;
        w.write_record([
            row.sigma.to_string(),
            row.alpha.to_string(),
            row.beta.to_string(),
            row.gamma.to_string(),
            metric.as_str().unwrap_or_default().to_string(),
            row.score.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&args.out, e))?;
    let b = result.best_row;
    println!("best sigma {} alpha {} beta {} score {}", b.sigma, b.alpha, b.beta, b.score);
    Ok(())
}

fn run_synth(args: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let spec: SynthSpec = read_json(&args.spec)?;
    let data = synth_generate(&spec, seed.unwrap_or(42))?;
    data.write_csv(&args.out)?;
    println!("wrote {} rows to {}", data.rows(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Train(a) => run_train(a, cli.seed),
        Command::Score(a) => run_score(a),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a, cli.seed),
        Command::Synth(a) => run_synth(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

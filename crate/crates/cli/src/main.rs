use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trafficfilter::filters::smooth_and_blend;
use trafficfilter::io::csv::{forecast_rows, load_forecast_csv, save_forecast_csv};
use trafficfilter::io::{
    generate_synthetic, load_checkpoint, load_csv, save_checkpoint, save_csv, SyntheticConfig,
};
use trafficfilter::metrics::{render_csv, render_table, DEFAULT_MAPE_EPSILON};
use trafficfilter::predictors::{
    collect_forecasts, rolling_evaluate, summarize, CopyLastStep, EvalMode, EvalOptions,
    EvaluationReport, FilterPredictor, FilteredCopyLastStep, Forecaster, PredictorConfig,
    DEFAULT_HISTORY, DEFAULT_HORIZON, DEFAULT_SMOOTHING_WINDOW,
};
use trafficfilter::tensor::TimeSeriesTensor;
use trafficfilter::training::{
    make_windows, mean_std, train, Optimizer, Split, TrainConfig, DEFAULT_SPLIT,
};

mod config;
use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "trafficfilter", version, about = "Denoise and forecast traffic speed series")]
struct Cli {
    /// Flat key = value settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset as CSV
    Generate(GenerateArgs),
    /// Apply moving average + blend to every stream of a CSV
    Filter(FilterArgs),
    /// Score CopyLastStep and its smoothed variant
    Baseline(BaselineArgs),
    /// Train a filter predictor
    Train(TrainArgs),
    /// Write forecasts from a checkpoint
    Predict(PredictArgs),
    /// Per-horizon-step metrics for a forecast CSV or a checkpoint
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, short)]
    out: PathBuf,
    /// [default: 5]
    #[arg(long)]
    nodes: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    days: Option<usize>,
    /// Sampling interval in seconds [default: 300]
    #[arg(long)]
    interval: Option<u32>,
    /// [default: 2.0]
    #[arg(long)]
    noise_std: Option<f64>,
    /// [default: 0.02]
    #[arg(long)]
    spike_probability: Option<f64>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Moving-average window [default: 5]
    #[arg(long)]
    window: Option<usize>,
}

/// Window and scoring options shared by the evaluating subcommands.
#[derive(Args, Debug)]
struct EvalArgs {
    /// [default: 12]
    #[arg(long)]
    history: Option<usize>,
    /// [default: 12]
    #[arg(long)]
    horizon: Option<usize>,
    /// Steps between forecast origins [default: 1]
    #[arg(long)]
    stride: Option<usize>,
    /// Forecast each step one ahead from its true predecessor
    #[arg(long)]
    rolling: bool,
    /// Targets with |value| <= this are left out of MAPE [default: 1e-6]
    #[arg(long)]
    mape_epsilon: Option<f64>,
    /// Part of the series to score: all, train, val or test [default: all]
    #[arg(long)]
    split: Option<SplitArg>,
    /// Chronological train,val,test fractions [default: 0.7,0.1,0.2]
    #[arg(long)]
    split_ratios: Option<Ratios>,
    /// Also write the metrics table as CSV
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Moving-average window of the smoothed baseline [default: 5]
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Checkpoint path; with several seeds each gets a `-seed<N>` suffix
    #[arg(long, short)]
    out: PathBuf,
    /// Training log path [default: checkpoint path with .log extension]
    #[arg(long)]
    log: Option<PathBuf>,
    /// [default: 12]
    #[arg(long)]
    history: Option<usize>,
    /// [default: 12]
    #[arg(long)]
    horizon: Option<usize>,
    /// Hidden channels of the filter [default: 4]
    #[arg(long)]
    width: Option<usize>,
    /// [default: 1e-3]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// adam or sgd [default: adam]
    #[arg(long)]
    optimizer: Option<OptimizerArg>,
    /// Stop after this many epochs without validation improvement
    #[arg(long)]
    patience: Option<usize>,
    /// One seed or a comma-separated list [default: 42]
    #[arg(long)]
    seed: Option<SeedList>,
    /// Chronological train,val,test fractions [default: 0.7,0.1,0.2]
    #[arg(long)]
    split_ratios: Option<Ratios>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Steps between forecast origins [default: 1]
    #[arg(long)]
    stride: Option<usize>,
    /// Forecast each step one ahead from its true predecessor
    #[arg(long)]
    rolling: bool,
    /// Only forecast origins whose whole horizon is observed
    #[arg(long)]
    observed_only: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Forecast CSV to score
    #[arg(long, conflicts_with_all = ["checkpoint", "input"])]
    forecasts: Option<PathBuf>,
    /// Checkpoint to run over --input
    #[arg(long, requires = "input")]
    checkpoint: Option<PathBuf>,
    #[arg(long, short, requires = "checkpoint")]
    input: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl FromStr for SplitArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(SplitArg::All),
            "train" => Ok(SplitArg::Train),
            "val" => Ok(SplitArg::Val),
            "test" => Ok(SplitArg::Test),
            _ => Err(format!("expected all, train, val or test, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ratios(f64, f64, f64);

impl FromStr for Ratios {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b, c] => Ok(Ratios(a, b, c)),
            _ => Err(format!("expected three comma-separated fractions, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SeedList(Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let seeds: Vec<u64> = s
            .split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|e| format!("seed {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if seeds.is_empty() {
            return Err("no seeds given".into());
        }
        Ok(SeedList(seeds))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum OptimizerArg {
    Adam,
    Sgd,
}

impl FromStr for OptimizerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adam" => Ok(OptimizerArg::Adam),
            "sgd" => Ok(OptimizerArg::Sgd),
            _ => Err(format!("expected adam or sgd, got {s:?}")),
        }
    }
}

impl fmt::Display for SplitArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitArg::All => "all",
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
        };
        f.write_str(s)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(a, &file),
        Command::Filter(a) => filter(a, &file),
        Command::Baseline(a) => baseline(a, &file),
        Command::Train(a) => train_cmd(a, &file),
        Command::Predict(a) => predict(a, &file),
        Command::Evaluate(a) => evaluate(a, &file),
    }
}

fn generate(a: GenerateArgs, file: &FileConfig) -> Result<()> {
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        n_nodes: file.resolve(a.nodes, "nodes", d.n_nodes)?,
        n_days: file.resolve(a.days, "days", d.n_days)?,
        interval_seconds: file.resolve(a.interval, "interval", d.interval_seconds)?,
        gaussian_noise_std: file.resolve(a.noise_std, "noise_std", d.gaussian_noise_std)?,
        spike_probability: file.resolve(a.spike_probability, "spike_probability", d.spike_probability)?,
        rng_seed: file.resolve(a.seed, "seed", d.rng_seed)?,
        ..d
    };
    let series = generate_synthetic(&cfg)?;
    save_csv(&series, &a.out)?;
    let (n, t, _) = series.shape();
    println!("wrote {n} nodes x {t} steps to {}", a.out.display());
    Ok(())
}

fn filter(a: FilterArgs, file: &FileConfig) -> Result<()> {
    let window = file.resolve(a.window, "window", DEFAULT_SMOOTHING_WINDOW)?;
    let series = load_csv(&a.input)?;
    let smoothed = series.map_streams(|s| smooth_and_blend(s, window))?;
    save_csv(&smoothed, &a.out)?;
    println!("smoothed {} streams with window {window} into {}", series.nodes(), a.out.display());
    Ok(())
}

struct ResolvedEval {
    opts: EvalOptions,
    split: SplitArg,
    ratios: Ratios,
    csv_out: Option<PathBuf>,
}

/// `history` pins the history length (a checkpoint's); `default_horizon`
/// applies when neither flag nor file sets one.
fn resolve_eval(
    a: &EvalArgs,
    file: &FileConfig,
    history: Option<usize>,
    default_horizon: usize,
) -> Result<ResolvedEval> {
    let history = match history {
        Some(h) => {
            if a.history.is_some_and(|given| given != h) {
                bail!("--history {} does not match the checkpoint's history {h}", a.history.unwrap());
            }
            h
        }
        None => file.resolve(a.history, "history", DEFAULT_HISTORY)?,
    };
    let d = DEFAULT_SPLIT;
    Ok(ResolvedEval {
        opts: EvalOptions {
            history,
            horizon: file.resolve(a.horizon, "horizon", default_horizon)?,
            stride: file.resolve(a.stride, "stride", 1)?,
            mode: if file.switch(a.rolling, "rolling")? {
                EvalMode::Rolling
            } else {
                EvalMode::OneShot
            },
            mask_epsilon: file.resolve(a.mape_epsilon, "mape_epsilon", DEFAULT_MAPE_EPSILON)?,
            range: None,
        },
        split: file.resolve(a.split, "split", SplitArg::All)?,
        ratios: file.resolve(a.split_ratios, "split_ratios", Ratios(d.0, d.1, d.2))?,
        csv_out: a.csv_out.clone(),
    })
}

impl ResolvedEval {
    fn with_range(mut self, series: &TimeSeriesTensor) -> Result<Self> {
        let split = match self.split {
            SplitArg::All => return Ok(self),
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        };
        let r = self.ratios;
        let data = make_windows(series, self.opts.history, self.opts.horizon, (r.0, r.1, r.2))?;
        self.opts.range = Some(data.range(split));
        Ok(self)
    }

    fn describe(&self) -> String {
        let mode = match self.opts.mode {
            EvalMode::OneShot => "one-shot",
            EvalMode::Rolling => "rolling",
        };
        format!(
            "history {}, horizon {}, stride {}, {mode}, split {}",
            self.opts.history, self.opts.horizon, self.opts.stride, self.split
        )
    }
}

fn print_report(title: &str, report: &EvaluationReport) {
    println!("{title} ({} windows)", report.windows);
    print!("{}", render_table(&report.rows()));
    println!();
}

fn write_metrics_csv(path: &Option<PathBuf>, rows: &[trafficfilter::metrics::MetricsRow]) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, render_csv(rows)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn baseline(a: BaselineArgs, file: &FileConfig) -> Result<()> {
    let series = load_csv(&a.input)?;
    let window = file.resolve(a.window, "window", DEFAULT_SMOOTHING_WINDOW)?;
    let ev = resolve_eval(&a.eval, file, None, DEFAULT_HORIZON)?.with_range(&series)?;
    println!("{}", ev.describe());
    let raw = rolling_evaluate(&CopyLastStep, &series, &ev.opts)?;
    let smooth = rolling_evaluate(&FilteredCopyLastStep { window }, &series, &ev.opts)?;
    print_report("copy-last-step", &raw);
    print_report(&format!("filtered copy-last-step (window {window})"), &smooth);
    let mut rows = Vec::new();
    for (name, report) in [("copy_last_step", &raw), ("filtered_copy_last_step", &smooth)] {
        rows.extend(report.rows().into_iter().map(|(step, r)| (format!("{name}:{step}"), r)));
    }
    write_metrics_csv(&ev.csv_out, &rows)
}

fn with_suffix(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

fn train_cmd(a: TrainArgs, file: &FileConfig) -> Result<()> {
    let series = load_csv(&a.input)?;
    let config = PredictorConfig {
        history: file.resolve(a.history, "history", DEFAULT_HISTORY)?,
        horizon: file.resolve(a.horizon, "horizon", DEFAULT_HORIZON)?,
        features: series.features(),
        width: file.resolve(a.width, "width", PredictorConfig::default().width)?,
    };
    let d = TrainConfig::default();
    let optimizer = match file.resolve(a.optimizer, "optimizer", OptimizerArg::Adam)? {
        OptimizerArg::Adam => Optimizer::adam(),
        OptimizerArg::Sgd => Optimizer::Sgd,
    };
    let base = TrainConfig {
        learning_rate: file.resolve(a.lr, "lr", d.learning_rate)?,
        epochs: file.resolve(a.epochs, "epochs", d.epochs)?,
        batch_size: file.resolve(a.batch_size, "batch_size", d.batch_size)?,
        optimizer,
        seed: d.seed,
        early_stop_patience: match a.patience {
            Some(p) => Some(p),
            None => file.resolve(None, "patience", 0usize).map(|p| (p > 0).then_some(p))?,
        },
    };
    let seeds = file.resolve(a.seed, "seed", SeedList(vec![d.seed]))?.0;
    let ratios = file.resolve(a.split_ratios, "split_ratios", Ratios(DEFAULT_SPLIT.0, DEFAULT_SPLIT.1, DEFAULT_SPLIT.2))?;
    let data = make_windows(&series, config.history, config.horizon, (ratios.0, ratios.1, ratios.2))?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log"));

    let test_opts = (!data.is_empty(Split::Test)).then(|| EvalOptions {
        history: config.history,
        horizon: config.horizon,
        range: Some(data.range(Split::Test)),
        ..Default::default()
    });
    let baseline_mae = match &test_opts {
        Some(o) => Some(rolling_evaluate(&CopyLastStep, &series, o)?.overall.mae),
        None => None,
    };
    if let Some(b) = baseline_mae {
        println!("copy-last-step test MAE {b:.4}");
    }

    let mut test_maes = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let mut predictor = FilterPredictor::fit(config, &series, data.range(Split::Train), seed)?;
        let log = train(&mut predictor, &data, &cfg)
            .with_context(|| format!("training with seed {seed}"))?;
        let (ckpt, log_out) = if seeds.len() > 1 {
            (with_suffix(&a.out, seed), with_suffix(&log_path, seed))
        } else {
            (a.out.clone(), log_path.clone())
        };
        save_checkpoint(&predictor, &ckpt)?;
        std::fs::write(&log_out, log.to_text())
            .with_context(|| format!("writing {}", log_out.display()))?;
        let last = log.last().expect("epoch 0 is always logged");
        let mut line = format!(
            "seed {seed}: {} epochs, train MAE {:.4}, val MAE {}",
            last.epoch,
            last.train_loss,
            last.val_loss.map_or("NA".into(), |v| format!("{v:.4}"))
        );
        if let Some(o) = &test_opts {
            let mae = rolling_evaluate(&predictor, &series, o)?.overall.mae;
            line.push_str(&format!(", test MAE {mae:.4}"));
            test_maes.push(mae);
        }
        println!("{line} -> {}", ckpt.display());
    }
    if seeds.len() > 1 {
        if let Some((m, s)) = mean_std(&test_maes) {
            println!("test MAE over {} seeds: {m:.4} ± {s:.4}", seeds.len());
        }
    }
    Ok(())
}

fn predict(a: PredictArgs, file: &FileConfig) -> Result<()> {
    let predictor = load_checkpoint(&a.checkpoint)?;
    let series = load_csv(&a.input)?;
    let c = predictor.config();
    let opts = EvalOptions {
        history: c.history,
        horizon: c.horizon,
        stride: file.resolve(a.stride, "stride", 1)?,
        mode: if file.switch(a.rolling, "rolling")? {
            EvalMode::Rolling
        } else {
            EvalMode::OneShot
        },
        ..Default::default()
    };
    let records = collect_forecasts(&predictor, &series, &opts, !a.observed_only)?;
    let rows = forecast_rows(&records, &series);
    save_forecast_csv(&rows, &a.out)?;
    println!("wrote {} forecasts to {}", rows.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let report = if let Some(path) = &a.forecasts {
        let ev = resolve_eval(&a.eval, file, None, DEFAULT_HORIZON)?;
        let rows = load_forecast_csv(path)?;
        let scored: Vec<_> = rows
            .iter()
            .filter_map(|r| r.actual.map(|act| (r.horizon_step, r.predicted, act)))
            .collect();
        if scored.is_empty() {
            bail!("{} has no rows with an actual value", path.display());
        }
        let horizon = scored.iter().map(|s| s.0).max().unwrap_or(1);
        let nodes = rows.iter().map(|r| r.node_id.as_str()).collect::<HashSet<_>>().len();
        let windows = rows.iter().filter(|r| r.horizon_step == 1).count() / nodes.max(1);
        let report = summarize(scored, horizon, ev.opts.mask_epsilon, windows)?;
        println!("{}", path.display());
        (report, ev.csv_out)
    } else if let (Some(ckpt), Some(input)) = (&a.checkpoint, &a.input) {
        let predictor = load_checkpoint(ckpt)?;
        let series = load_csv(input)?;
        let ev = resolve_eval(&a.eval, file, predictor.history_len(), predictor.config().horizon)?.with_range(&series)?;
        if ev.opts.horizon > predictor.config().horizon {
            bail!(
                "horizon {} exceeds the checkpoint's horizon {}",
                ev.opts.horizon,
                predictor.config().horizon
            );
        }
        println!("{}", ev.describe());
        (rolling_evaluate(&predictor, &series, &ev.opts)?, ev.csv_out)
    } else {
        bail!("give either --forecasts or --checkpoint with --input");
    };
    let (report, csv_out) = report;
    print_report("metrics", &report);
    write_metrics_csv(&csv_out, &report.rows())
}

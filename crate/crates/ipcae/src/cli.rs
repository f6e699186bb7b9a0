//! `ipcae` command line.
//!
//! Exit codes: 0 success, 1 invalid input (flags, config, data, shapes),
//! 2 failure during a run (divergence, oracle mismatch, unwritable output).

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipcae_core::analysis::{oracle_check, OracleCheckConfig};
use ipcae_core::data::{gen_synthetic, Split, SyntheticSpec};
use ipcae_core::training::{
    evaluate, parse_variant, plan_sweep, summarize_sweep, train, MetricKind, RunSummary, SweepAxis,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::{self, SavedRun};
use crate::config::{load_raw, prepare, preprocess, RunConfig};
use crate::csvio::write_csv;
use crate::error::{Error, Result};
use crate::report::{metrics_csv, trace_csv, write_json, write_text, Summary, SweepReport};

/// Largest accepted deviation between an update rule and autodiff.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "ipcae",
    version,
    about = "Concrete-autoencoder feature selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write metrics.csv, summary.json and checkpoint.bin.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and print JSON.
    Eval(EvalArgs),
    /// Train every value of one axis over several seeds.
    Sweep(SweepArgs),
    /// Compare the closed-form SGD update rules against autodiff.
    OracleCheck(OracleArgs),
    /// Generate a synthetic dataset and its informative feature set.
    GenSynth(GenArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "P", alias = "p")]
    p: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV to evaluate on; defaults to the data the checkpoint was trained on.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// One of K, P, variant, lambda.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Overrides the config's seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10")]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.1")]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Offset added to every rule output, to exercise the failure path.
    #[arg(long, default_value_t = 0.0, hide = true)]
    corrupt: f64,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// JSON synthetic spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for data.csv and planted.json.
    #[arg(long)]
    out: PathBuf,
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::input(format!("json: {e}")))?;
    println!("{text}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut run = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        run.train.seed = seed;
    }
    if let Some(v) = &a.variant {
        run.train.variant = parse_variant(v)?;
    }
    if let Some(p) = a.p {
        run.train.p = Some(p);
    }
    if let Some(lambda) = a.lambda {
        run.train.lambda = lambda;
    }
    if let Some(epochs) = a.epochs {
        run.train.epochs = epochs;
    }
    run.validate()?;
    let prepared = prepare(&run.data)?;
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    let (log, ckpt) = train(&run.train, &prepared.dataset)?;

    write_text(&a.out.join("metrics.csv"), &metrics_csv(&log))?;
    if run.train.trace {
        write_text(&a.out.join("trace.csv"), &trace_csv(&log.trace))?;
    }
    let mut summary = Summary::new(log.metric, vec![RunSummary::of(run.train.seed, &log)]);
    summary.planted = prepared.planted.clone();
    summary.warnings = prepared.warnings.clone();
    write_json(&a.out.join("summary.json"), &summary)?;
    let saved = SavedRun {
        checkpoint: ckpt,
        class_names: prepared.dataset.class_names.clone(),
        run,
    };
    checkpoint::save(&a.out.join("checkpoint.bin"), &saved)?;
    eprintln!(
        "best epoch {}: test {:?} {:.6}, selection {:?}",
        log.best_epoch, log.metric, log.test_metric, log.selection
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    split: Split,
    metric_kind: MetricKind,
    metric: f64,
    loss: f64,
    unique_pct: f64,
    indices: Vec<usize>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let saved = checkpoint::load(&a.checkpoint)?;
    let (raw, _) = load_raw(&saved.run.data, a.data.as_deref())?;
    let names = (!saved.class_names.is_empty()).then_some(saved.class_names.as_slice());
    let (ds, _) = preprocess(&saved.run.data, &raw, names)?;
    let split = Split::from(a.split);
    let rec = evaluate(&saved.checkpoint, &ds, split)?;
    print_json(&EvalOutput {
        split,
        metric_kind: rec.metric_kind,
        metric: rec.metric,
        loss: rec.loss,
        unique_pct: rec.unique_pct,
        indices: rec.indices,
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut run = RunConfig::load(&a.config)?;
    if let Some(epochs) = a.epochs {
        run.train.epochs = epochs;
    }
    if let Some(seeds) = a.seeds {
        run.seeds = Some(seeds);
    }
    run.validate()?;
    let axis: SweepAxis = a.axis.parse()?;
    let seeds = run.seeds();
    let jobs = plan_sweep(&run.train, axis, &a.values, &seeds)?;
    let prepared = prepare(&run.data)?;
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    let ds = &prepared.dataset;
    let results: Vec<_> = jobs
        .par_iter()
        .map(|job| train(&job.config, ds).map(|(log, _)| log))
        .collect();
    for (job, result) in jobs.iter().zip(&results) {
        match result {
            Ok(log) => {
                let path = a
                    .out
                    .join("runs")
                    .join(&job.value)
                    .join(format!("seed{}.csv", job.config.seed));
                write_text(&path, &metrics_csv(log))?;
            }
            Err(e) => eprintln!(
                "warning: {}={} seed {} failed: {e}",
                a.axis, job.value, job.config.seed
            ),
        }
    }
    let report = SweepReport {
        axis,
        metric: MetricKind::of(run.train.task),
        seeds,
        rows: summarize_sweep(&jobs, &results),
    };
    write_json(&a.out.join("sweep.json"), &report)?;
    write_text(&a.out.join("sweep.csv"), &report.csv())?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_oracle_check(a: OracleArgs) -> Result<()> {
    let report = oracle_check(&OracleCheckConfig {
        trials: a.trials,
        dims: a.dims,
        etas: a.eta,
        seed: a.seed,
        corruption: a.corrupt,
    })?;
    let mut failed = false;
    for (name, dev) in [
        ("direct", report.direct),
        ("scalar_ip", report.scalar),
        ("full_ip", report.full),
    ] {
        let ok = dev <= ORACLE_TOLERANCE;
        failed |= !ok;
        println!(
            "{name:<10} max |deviation| = {dev:.3e}  {}",
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!("{} trials, tolerance {ORACLE_TOLERANCE:e}", report.trials);
    if failed {
        return Err(
            ipcae_core::Error::Contract("update rule disagrees with autodiff".into()).into(),
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PlantedFile<'a> {
    planted: &'a [usize],
    feature_names: Vec<&'a str>,
    spec: &'a SyntheticSpec,
}

fn cmd_gen_synth(a: GenArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.spec)
        .map_err(|e| Error::input(format!("cannot read spec {}: {e}", a.spec.display())))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("{}: invalid spec: {e}", a.spec.display())))?;
    let syn = gen_synthetic(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::write(&a.out, e))?;
    write_csv(&a.out.join("data.csv"), &syn.dataset)?;
    let names = syn
        .planted
        .iter()
        .map(|&j| syn.dataset.feature_names[j].as_str())
        .collect();
    write_json(
        &a.out.join("planted.json"),
        &PlantedFile {
            planted: &syn.planted,
            feature_names: names,
            spec: &spec,
        },
    )?;
    Ok(())
}

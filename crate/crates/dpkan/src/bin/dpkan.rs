//! Command-line front end: training, evaluation, privacy accounting,
//! synthetic data generation, and width sweeps.
//!
//! Exit codes: 0 success; 1 validation or runtime failure (one-line
//! `error: <detail>` on stderr); 2 usage errors (clap).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpkan::accountant;
use dpkan::data;
use dpkan::experiment::{self, ExperimentConfig};
use dpkan::loss::LossKind;
use dpkan::optim;
use dpkan::serialize;

#[derive(Parser)]
#[command(name = "dpkan", version, about = "Differentially private KAN/MLP training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a config file.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Compute epsilon for a noise multiplier, or calibrate one for a
    /// target epsilon.
    Accountant(AccountantArgs),
    /// Generate a synthetic regression dataset as CSV.
    GenSynthetic(GenSyntheticArgs),
    /// Sweep hidden widths and emit figure data as TSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.txt, log_trial<i>.txt, and model files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved model file.
    #[arg(long)]
    model: PathBuf,
    /// CSV file, or IDX images file when --labels is given.
    #[arg(long)]
    data: PathBuf,
    /// IDX labels file; switches --data to IDX images.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV target column (name with header, 0-based index without).
    #[arg(long, default_value = "y")]
    target: String,
    /// Metric to report.
    #[arg(long, value_parser = ["r2", "accuracy"])]
    metric: Option<String>,
}

#[derive(Args)]
struct AccountantArgs {
    /// Noise multiplier; prints the epsilon it spends.
    #[arg(long, conflicts_with = "target_epsilon")]
    sigma: Option<f64>,
    /// Target epsilon; prints the calibrated noise multiplier.
    #[arg(long)]
    target_epsilon: Option<f64>,
    #[arg(long)]
    batch_size: usize,
    #[arg(long)]
    dataset_size: usize,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Target noise standard deviation.
    #[arg(long)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Template config; must be a classification task.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated hidden widths, e.g. 16,32,64.
    #[arg(long)]
    widths: String,
    /// Output TSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> dpkan::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let report = experiment::run_experiment(&cfg, args.out.as_deref())?;
            print!("{}", report.emit());
        }
        Command::Evaluate(args) => {
            let model = serialize::load_model(&args.model)?;
            let (ds, kind) = match &args.labels {
                Some(labels) => (
                    data::load_mnist_idx(&args.data, labels)?,
                    LossKind::CrossEntropy,
                ),
                None => (
                    data::load_csv(&args.data, &args.target, true)?,
                    LossKind::Mse,
                ),
            };
            let kind = match args.metric.as_deref() {
                Some("r2") => LossKind::Mse,
                Some("accuracy") => LossKind::CrossEntropy,
                _ => kind,
            };
            let metric = optim::evaluate_model(&model, &ds, kind)?;
            let name = match kind {
                LossKind::Mse => "r2",
                LossKind::CrossEntropy => "accuracy",
            };
            println!("{name} = {metric:.6}");
        }
        Command::Accountant(args) => match (args.sigma, args.target_epsilon) {
            (Some(sigma), None) => {
                let spend = accountant::compute_epsilon(
                    sigma,
                    args.batch_size,
                    args.dataset_size,
                    args.epochs,
                    args.delta,
                )?;
                println!("epsilon = {:.6}", spend.epsilon);
            }
            (None, Some(target)) => {
                let sigma = accountant::calibrate_sigma(
                    target,
                    args.delta,
                    args.batch_size,
                    args.dataset_size,
                    args.epochs,
                )?;
                println!("sigma = {sigma:.6}");
            }
            _ => {
                return Err(dpkan::Error::Argument(
                    "pass exactly one of --sigma or --target-epsilon".into(),
                ))
            }
        },
        Command::GenSynthetic(args) => {
            let ds = data::gen_synthetic(args.n, args.d, args.noise, args.seed)?;
            data::dataset_to_csv(&ds, &args.out)?;
            println!("wrote {} rows to {}", ds.len(), args.out.display());
        }
        Command::Sweep(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let widths: Vec<usize> = args
                .widths
                .split(',')
                .map(|w| {
                    w.trim().parse().map_err(|_| {
                        dpkan::Error::Parse(format!("bad width {w:?} in --widths"))
                    })
                })
                .collect::<dpkan::Result<_>>()?;
            let rows = experiment::sweep(&cfg, &widths)?;
            let tsv = experiment::sweep_to_tsv(&rows);
            match &args.out {
                Some(path) => std::fs::write(path, &tsv)?,
                None => print!("{tsv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Clap handles usage errors itself with exit code 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

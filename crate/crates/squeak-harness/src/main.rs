//! CLI entry point: `run` executes an experiment, `generate` writes a
//! synthetic dataset CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use squeak_harness::{
    config::{ConfigFile, DatasetSpec, ExperimentConfig, KernelSpec, Overrides},
    error::EXIT_VERIFY,
    runner::{generate_synthetic, run_experiment},
    HarnessError,
};

#[derive(Parser)]
#[command(
    name = "squeak-harness",
    about = "Seeded experiments for streaming kernel-matrix sketching",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run samplers over a dataset and verify them at checkpoints.
    Run(RunArgs),
    /// Generate a synthetic dataset and write it as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset spec: csv:PATH, gaussian:n=..[,dim=..][,centers=..][,noise=..][,seed=..],
    /// or blocks:n=..[,blocks=..][,scale=..][,noise=..][,seed=..]
    #[arg(long)]
    dataset: Option<String>,
    /// Kernel spec: gaussian:BANDWIDTH, linear, or polynomial:DEGREE,OFFSET
    #[arg(long)]
    kernel: Option<String>,
    /// Regularization of the leverage scores and the approximation target.
    #[arg(long)]
    gamma: Option<f64>,
    /// Ridge-regression regularization (defaults to gamma).
    #[arg(long)]
    mu: Option<f64>,
    /// Multiplicative score-approximation accuracy, in (0, 1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Failure probability, in (0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Leading constant of the per-point copy budget.
    #[arg(long)]
    qbar_const: Option<f64>,
    /// Sampler: squeak, uniform, or oracle-rls.
    #[arg(long)]
    sampler: Option<String>,
    /// Seeds: comma list (0,3,17) or half-open range (0..50).
    #[arg(long)]
    seeds: Option<String>,
    /// Verification checkpoints: comma list of stream positions.
    /// Default: powers of two from 16 plus the stream end.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Output JSON-lines path; the CSV summary lands next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest t at which a t-by-t kernel matrix may be materialized.
    #[arg(long)]
    verify_cap: Option<usize>,
    /// Continue an existing report, skipping completed (seed, checkpoint) pairs.
    #[arg(long)]
    resume: bool,
    /// Exit with code 3 if any new checkpoint fails the approximation check.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Synthetic dataset spec (gaussian:n=.. or blocks:n=..).
    #[arg(long)]
    dataset: String,
    /// Kernel spec for the smooth-target generator (default gaussian:1.0).
    #[arg(long)]
    kernel: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let file = match &args.config {
                Some(path) => ConfigFile::load(path)?,
                None => ConfigFile::default(),
            };
            let overrides = Overrides {
                dataset: args.dataset,
                kernel: args.kernel,
                gamma: args.gamma,
                mu: args.mu,
                epsilon: args.epsilon,
                delta: args.delta,
                qbar_const: args.qbar_const,
                sampler: args.sampler,
                seeds: args.seeds,
                checkpoints: args.checkpoints,
                out: args.out,
                verify_cap: args.verify_cap,
            };
            let config = ExperimentConfig::from_sources(file, overrides)?;
            let report = run_experiment(&config, args.resume)?;
            println!(
                "wrote {} new records ({} total) to {}; {} verification failures among new records",
                report.new_records,
                report.records.len(),
                config.out.display(),
                report.new_failures,
            );
            if args.strict && report.new_failures > 0 {
                eprintln!("strict mode: {} checkpoint(s) failed verification", report.new_failures);
                return Ok(EXIT_VERIFY as u8);
            }
            Ok(0)
        }
        Command::Generate(args) => {
            let spec = DatasetSpec::parse(&args.dataset)?;
            let kernel_spec = match &args.kernel {
                Some(s) => KernelSpec::parse(s)?,
                None => KernelSpec::Gaussian { bandwidth: 1.0 },
            };
            let dataset = generate_synthetic(&spec, &kernel_spec.build()?)?;
            dataset.save_csv(&args.out)?;
            println!("wrote {} points to {}", dataset.len(), args.out.display());
            Ok(0)
        }
    }
}

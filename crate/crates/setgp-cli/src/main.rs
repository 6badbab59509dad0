//! `setgp` — validation, diagnostics, optimization campaigns, and jitter
//! sweeps for set-input Gaussian-process models. Results are written as
//! CSV plus a JSON run manifest; plotting is left to external tools.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod commands;
mod data;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "setgp", version, about = "GP regression and Bayesian optimization over point-set inputs")]
struct Cli {
    /// Worker threads for replications and Gram assembly (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train/test Q^2 validation over kernels, split ratios, and replications.
    Validate(ValidateArgs),
    /// Leave-one-out and out-of-sample residual diagnostics.
    Diag(DiagArgs),
    /// Expected-Improvement campaigns against the random baseline.
    Bo(BoArgs),
    /// Double-sum + jitter comparison across conditioning targets a = 1..=7.
    JitterSweep(JitterSweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ObjectiveArg {
    Max,
    Min,
    Mean,
    Combinatorial,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum KernelArg {
    Ds,
    De,
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Synthetic objective (ignored when --csv is given).
    #[arg(long, value_enum, default_value = "mean")]
    objective: ObjectiveArg,

    /// External dataset in the set-per-rows CSV schema.
    #[arg(long)]
    csv: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Kernel families to validate.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["de"])]
    kernel: Vec<KernelArg>,

    /// Conditioning target: fit with jitter bound delta(a) on singular fits.
    #[arg(long)]
    jitter_a: Option<u32>,

    /// Train fractions.
    #[arg(long, value_delimiter = ',', default_values = ["0.8"])]
    ratio: Vec<f64>,

    /// Replications per (kernel, ratio) cell.
    #[arg(long, default_value = "20")]
    reps: usize,

    #[arg(long, default_value = "42")]
    seed: u64,

    /// Output directory.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct DiagArgs {
    #[command(flatten)]
    source: SourceArgs,

    #[arg(long, value_enum, default_value = "de")]
    kernel: KernelArg,

    #[arg(long)]
    jitter_a: Option<u32>,

    /// Train fraction for the out-of-sample panel.
    #[arg(long, default_value = "0.8")]
    ratio: f64,

    #[arg(long, default_value = "42")]
    seed: u64,

    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct BoArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Kernel families to run as EI methods (the random baseline always runs).
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["de"])]
    kernel: Vec<KernelArg>,

    #[arg(long)]
    jitter_a: Option<u32>,

    /// Independent trials per method.
    #[arg(long, default_value = "50")]
    trials: usize,

    /// Initial design size.
    #[arg(long, default_value = "10")]
    init: usize,

    /// Objective evaluations after the initial design.
    #[arg(long, default_value = "40")]
    budget: usize,

    #[arg(long, default_value = "42")]
    seed: u64,

    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args, Debug)]
struct JitterSweepArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Train fraction for the prediction comparison.
    #[arg(long, default_value = "0.8")]
    ratio: f64,

    /// Replications per conditioning target.
    #[arg(long, default_value = "5")]
    reps: usize,

    /// EI trials per conditioning target (0 skips the optimization block).
    #[arg(long, default_value = "0")]
    trials: usize,

    #[arg(long, default_value = "10")]
    init: usize,

    #[arg(long, default_value = "40")]
    budget: usize,

    #[arg(long, default_value = "42")]
    seed: u64,

    #[arg(long)]
    out: std::path::PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            std::process::exit(2);
        }
        // Ignore the error if a pool already exists (tests call main twice).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Validate(args) => commands::validate::run(args),
        Command::Diag(args) => commands::diag::run(args),
        Command::Bo(args) => commands::bo::run(args),
        Command::JitterSweep(args) => commands::jitter_sweep::run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_input_error() { 2 } else { 3 });
        }
    }
}

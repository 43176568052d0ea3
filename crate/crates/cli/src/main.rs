//! Command-line surface for gate-level trojan detection: corpus
//! generation, feature extraction, training, explanation, and evaluation.

mod cmd_benchgen;
mod cmd_evaluate;
mod cmd_explain;
mod cmd_extract;
mod cmd_train;
mod provenance;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Errors with dedicated exit codes. Everything else exits 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    MissingInput(String),
    #[error("{0}")]
    MethodModelMismatch(String),
    #[error("{0}")]
    MismatchedLengths(String),
}

#[derive(Parser)]
#[command(
    name = "netspect",
    version,
    about = "Structural trojan-gate detection and explanation for gate-level netlists"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark corpus with inserted trojans.
    Benchgen(cmd_benchgen::BenchgenArgs),
    /// Extract the five structural features per net into a CSV.
    Extract(cmd_extract::ExtractArgs),
    /// Train the boosted-tree model (and optionally the property ensemble).
    Train(cmd_train::TrainArgs),
    /// Explain predictions with one of the five backends.
    Explain(cmd_explain::ExplainArgs),
    /// Metrics, bootstrap CIs, threshold sweep, and paired comparisons.
    Evaluate(cmd_evaluate::EvaluateArgs),
    /// Threshold sweep only.
    Sweep(cmd_evaluate::SweepArgs),
}

/// Stable exit codes: 2 missing input, 3 single-class dataset, 4
/// method/model mismatch, 5 mismatched lengths, 6 infeasible generator
/// config, 1 anything else.
fn exit_code(err: &anyhow::Error) -> i32 {
    use netspect::benchgen::BenchgenError;
    use netspect::gbt::ModelError;
    for cause in err.chain() {
        if let Some(cli) = cause.downcast_ref::<CliError>() {
            return match cli {
                CliError::MissingInput(_) => 2,
                CliError::MethodModelMismatch(_) => 4,
                CliError::MismatchedLengths(_) => 5,
            };
        }
        if let Some(model) = cause.downcast_ref::<ModelError>() {
            if matches!(model, ModelError::SingleClassDataset) {
                return 3;
            }
        }
        if let Some(gen) = cause.downcast_ref::<BenchgenError>() {
            if matches!(gen, BenchgenError::InfeasibleConfig(_)) {
                return 6;
            }
        }
        if let Some(ensemble) = cause.downcast_ref::<netspect::ensemble::EnsembleError>() {
            if matches!(
                ensemble,
                netspect::ensemble::EnsembleError::Model(ModelError::SingleClassDataset)
            ) {
                return 3;
            }
        }
        if let Some(stats) = cause.downcast_ref::<netspect::stats::StatsError>() {
            if matches!(stats, netspect::stats::StatsError::MismatchedLengths(_, _)) {
                return 5;
            }
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Benchgen(args) => cmd_benchgen::run(&args),
        Command::Extract(args) => cmd_extract::run(&args),
        Command::Train(args) => cmd_train::run(&args),
        Command::Explain(args) => cmd_explain::run(&args),
        Command::Evaluate(args) => cmd_evaluate::run(&args),
        Command::Sweep(args) => cmd_evaluate::run_sweep(&args),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

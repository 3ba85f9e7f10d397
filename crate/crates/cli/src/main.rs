use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpnystrom::harness::{self, ExperimentConfig};
use mpnystrom::Error;

/// Mixed-precision Nyström approximation and preconditioning experiments.
#[derive(Parser)]
#[command(name = "nystrom-mp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep approximation errors, bounds and the precision heuristic.
    Approx {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep condition numbers, bounds and PCG iteration counts.
    Precond {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the eigenvalues of a Matrix Market file as CSV.
    Spectrum {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::InvalidInput(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Approx { config } => sweep(&config, harness::run_approx_experiment),
        Command::Precond { config } => sweep(&config, harness::run_precond_experiment),
        Command::Spectrum { matrix, out } => {
            let n = harness::write_spectrum(&matrix, &out)?;
            println!("wrote {n} eigenvalues to {}", out.display());
            Ok(())
        }
    }
}

fn sweep(
    path: &std::path::Path,
    runner: fn(&ExperimentConfig) -> mpnystrom::Result<harness::ExperimentReport>,
) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_file(path)?;
    let report = runner(&cfg)?;
    let (rows, aggs) = report.emit_csv(&cfg.output)?;
    let bad = report.rows.iter().filter(|r| !r.status.is_ok()).count();
    println!(
        "{} rows ({bad} skipped or failed) -> {}, {}",
        report.rows.len(),
        rows.display(),
        aggs.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nystrom-mp: {e}");
            exit_code(&e)
        }
    }
}

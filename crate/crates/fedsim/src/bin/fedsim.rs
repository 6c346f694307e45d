//! Thin command-line front end over the `fedsim` library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fedsim",
    about = "Deterministic federated-optimization simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file (sweep-aware) and write metrics.csv + manifest.json.
    Run {
        /// Flat JSON config; array-valued keys expand into a sweep.
        config: PathBuf,
        /// Output directory (sweep entries become subdirectories).
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate metrics.csv files: final accuracy, rounds to the target
    /// accuracy, and the round-cost ratio against the first run.
    Compare {
        /// metrics.csv paths; the first is the cost baseline.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Target accuracy in (0, 1].
        #[arg(long)]
        target: f64,
    },
    /// Run the fast subset of the invariant suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => fedsim::cli::run_command(&config, &out).map(|written| {
            for path in written {
                println!("wrote {}", path.display());
            }
        }),
        Command::Compare { metrics, target } => {
            let stdout = std::io::stdout();
            fedsim::cli::compare_command(&metrics, target, &mut stdout.lock())
        }
        Command::Selftest => {
            let stdout = std::io::stdout();
            fedsim::cli::selftest(&mut stdout.lock())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

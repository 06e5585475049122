use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distobs::io::commands::{cmd_analyze, cmd_design, cmd_reproduce, cmd_simulate, load_config};

/// Design, certify and simulate hybrid distributed observers for
/// multi-channel LTI systems over time-varying directed networks.
#[derive(Parser)]
#[command(name = "distobs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize per-agent observers and certify the convergence rate.
    Design {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Also write the report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the hybrid closed loop and write the trace CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Record per-iteration parameter-error norms in the trace.
        #[arg(long)]
        log_iterations: bool,
    },
    /// Certification numbers only.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a bundled scenario and evaluate its acceptance checks.
    Reproduce {
        /// One of: paper-example, paper-noise, resilience4.
        preset: String,
        /// Directory for the generated config, report, trace and summary.
        #[arg(long)]
        outdir: PathBuf,
    },
}

fn run(cli: Cli) -> distobs::Result<()> {
    match cli.command {
        Command::Design { config, report } => {
            let config = load_config(&config)?;
            cmd_design(&config, report.as_deref())?;
        }
        Command::Simulate {
            config,
            out,
            log_iterations,
        } => {
            let config = load_config(&config)?;
            cmd_simulate(&config, &out, log_iterations)?;
        }
        Command::Analyze { config } => {
            let config = load_config(&config)?;
            cmd_analyze(&config)?;
        }
        Command::Reproduce { preset, outdir } => {
            cmd_reproduce(&preset, &outdir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

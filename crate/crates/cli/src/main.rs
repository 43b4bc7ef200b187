use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use driftsync_cli::commands::{self, Axis};

/// Distributed online learning experiments with kernel models.
#[derive(Parser)]
#[command(name = "driftsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Delta,
    Period,
    Tau,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write the run log, summary and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the stream seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the config once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the config and check every bound inequality.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        corrupt_ledger: bool,
    },
}

fn fail(e: commands::CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => match commands::cmd_run(&config, &out, seed) {
            Ok(o) => {
                let r = &o.result;
                println!(
                    "rounds {} loss {} errors {} bytes {} syncs {} quiescence {}",
                    r.rounds,
                    r.cum_loss(),
                    r.cum_error(),
                    r.cum_bytes(),
                    r.syncs(),
                    r.ledger.quiescence_round()
                );
                if r.shortened {
                    println!("note: the stream ended after round {}", r.rounds);
                }
                for a in &o.artifacts {
                    println!("wrote {}", a.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Sweep {
            config,
            axis,
            values,
            out,
            seed,
        } => {
            let axis = match axis {
                AxisArg::Delta => Axis::Delta,
                AxisArg::Period => Axis::Period,
                AxisArg::Tau => Axis::Tau,
            };
            let values = match commands::parse_values(&values) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match commands::cmd_sweep(&config, axis, &values, &out, seed) {
                Ok(rows) => {
                    println!("wrote {} rows to {}", rows.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify {
            config,
            seed,
            corrupt_ledger,
        } => match commands::cmd_verify(&config, seed, corrupt_ledger) {
            Ok(checks) => {
                let mut failed = 0;
                for c in &checks {
                    println!("{c}");
                    failed += !c.holds() as usize;
                }
                if failed == 0 {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("{failed} of {} checks failed", checks.len());
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(e),
        },
    }
}

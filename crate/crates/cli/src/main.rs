use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use online_spo::verify::VerifyHooks;
use online_spo_cli::{cmd_plot, cmd_run, cmd_verify, RunOptions};

#[derive(Parser)]
#[command(name = "online-spo", version, about = "Online contextual decisions under resource constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a TOML config and write a CSV.
    Run {
        config: PathBuf,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = online_spo_cli::WORKERS_ENV)]
        workers: Option<usize>,
        /// Output CSV path (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot mean relative regret against T from a result CSV.
    Plot { csv: PathBuf, svg: PathBuf },
    /// Run the fast self-check suite.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => match cmd_run(&config, &RunOptions { seed, workers, out }) {
            Ok(report) => {
                if report.undefined_regret > 0 {
                    eprintln!(
                        "warning: relative regret undefined for {} rows (hindsight objective not positive)",
                        report.undefined_regret
                    );
                }
                println!("wrote {} rows to {}", report.rows, report.output.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Plot { csv, svg } => match cmd_plot(&csv, &svg) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Verify => {
            let (ok, table) = cmd_verify(&VerifyHooks::default());
            print!("{table}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

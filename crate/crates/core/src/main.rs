use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use badam::config::load_config;
use badam::error::Error;
use badam::experiment::run_experiment;

#[derive(Parser)]
#[command(name = "badam", version, about = "Adaptive subgradient training with a closed-form Gaussian weight posterior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to a TOML config (or a resolved JSON config).
        config: PathBuf,
        /// Override a config value, e.g. --override optimizer.eta=0.05.
        /// Bare keys work when unambiguous; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker pool size for seed fan-out (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the version.
    Version,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            overrides,
            workers,
        } => {
            let mut cfg = match load_config(&config, &overrides) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(exit_code_for(&e));
                }
            };
            if let Some(workers) = workers {
                cfg.experiment.workers = workers;
            }
            match run_experiment(&cfg) {
                Ok(out_dir) => {
                    println!("wrote {}", out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(exit_code_for(&e))
                }
            }
        }
        Command::Validate { config, overrides } => {
            match load_config(&config, &overrides).and_then(|cfg| cfg.validate().map(|()| cfg)) {
                Ok(cfg) => {
                    println!(
                        "ok: {} experiment, {} seed(s)",
                        cfg.experiment.kind,
                        cfg.experiment.seeds.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(exit_code_for(&e))
                }
            }
        }
        Command::Version => {
            println!("badam {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use macee::cli::{cmd_experiment, cmd_solve, exit_code, CliConfig};

/// Energy-efficiency games on MIMO multiple-access channels.
#[derive(Debug, Parser)]
#[command(name = "macee", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one channel draw with both equilibrium algorithms.
    Solve {
        /// Path to the key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Channel seed (defaults to the config's master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured Monte-Carlo experiment.
    Experiment {
        /// Path to the key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the full-scale protocol (1000 trials).
        #[arg(long)]
        full_scale: bool,
    },
}

fn run(cli: Cli) -> macee::Result<()> {
    match cli.command {
        Command::Solve { config, seed, out } => {
            let cfg = CliConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.master_seed);
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            cmd_solve(&cfg, seed, &out_dir)
        }
        Command::Experiment {
            config,
            seed,
            trials,
            out,
            full_scale,
        } => {
            let mut cfg = CliConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            if full_scale {
                cfg.trials = 1000;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            cmd_experiment(&cfg, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

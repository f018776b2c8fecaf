use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use demabar::output::write_results;
use demabar::{parse_config, run_experiment, ExperimentResult};

#[derive(Parser)]
#[command(name = "demabar", version, about = "Robust decentralised bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write regret.csv, summary.csv and manifest.toml.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials run concurrently; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Keep every n-th round in regret.csv.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            parse_config(&config)?;
            println!("{}: ok", config.display());
        }
        Command::Run { config, out, seed, jobs, every } => {
            let mut cfg = parse_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result: ExperimentResult =
                run_experiment(&cfg, jobs).with_context(|| format!("running {}", config.display()))?;
            let files = write_results(&cfg, &result, &out, every)?;
            println!(
                "{} trials, mean regret at T = {}: {}",
                cfg.trials,
                cfg.horizon,
                result.final_mean()
            );
            println!("wrote {}", files.summary.display());
        }
    }
    Ok(())
}

//! Result files: per-agent regret CSV, summary CSV and run manifest.
//!
//! `regret.csv` has columns `trial,agent,round,cumulative_regret` with one
//! row per (trial, normal agent, round); rounds can be thinned with `every`
//! (the final round is always kept). `summary.csv` has columns
//! `round,mean_regret,std_regret,comm_cost` with one row per round: the
//! across-trial mean and sample std of the all-agent average regret, and the
//! mean cumulative broadcast count. `manifest.toml` is the resolved config,
//! which parses back to an equal config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::engine::ExperimentResult;
use crate::scalar::Scalar;

pub const REGRET_FILE: &str = "regret.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

/// Paths of the files written for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultFiles {
    pub regret: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

impl ResultFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ResultFiles {
            regret: dir.join(REGRET_FILE),
            summary: dir.join(SUMMARY_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> OutputError + '_ {
    move |source| OutputError { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, OutputError> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

pub fn write_regret_csv<S: Scalar>(
    result: &ExperimentResult<S>,
    every: usize,
    out: &mut impl Write,
) -> std::io::Result<()> {
    let every = every.max(1);
    writeln!(out, "trial,agent,round,cumulative_regret")?;
    for trial in &result.trials {
        for (agent, curve) in trial.agent_curves.iter().enumerate() {
            let Some(curve) = curve else { continue };
            for (t, value) in curve.iter().enumerate() {
                let round = t + 1;
                if round % every == 0 || round == curve.len() {
                    writeln!(out, "{},{},{},{}", trial.trial, agent, round, value)?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_summary_csv<S: Scalar>(result: &ExperimentResult<S>, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "round,mean_regret,std_regret,comm_cost")?;
    for t in 0..result.horizon() {
        writeln!(out, "{},{},{},{}", t + 1, result.average.mean[t], result.average.std[t], result.comm[t])?;
    }
    Ok(())
}

pub fn manifest_text(cfg: &ExperimentConfig) -> String {
    format!(
        "# {} {}\n# seed {}\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        cfg.to_toml()
    )
}

/// Writes all three files into `dir`, creating it if needed.
pub fn write_results<S: Scalar>(
    cfg: &ExperimentConfig,
    result: &ExperimentResult<S>,
    dir: &Path,
    every: usize,
) -> Result<ResultFiles, OutputError> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let files = ResultFiles::in_dir(dir);

    let mut w = create(&files.regret)?;
    write_regret_csv(result, every, &mut w).and_then(|_| w.flush()).map_err(io_at(&files.regret))?;

    let mut w = create(&files.summary)?;
    write_summary_csv(result, &mut w).and_then(|_| w.flush()).map_err(io_at(&files.summary))?;

    std::fs::write(&files.manifest, manifest_text(cfg)).map_err(io_at(&files.manifest))?;
    Ok(files)
}

//! `run`, `sweep` and `verify`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use driftsync_core::learners::Compression;
use driftsync_core::protocol::{Inequality, SyncStrategy};
use driftsync_core::simulator::{run, verify_run, ExperimentConfig, RunResult};
use driftsync_core::Error;

use crate::config::{Config, ConfigError};
use crate::output::{self, SweepRow};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "DRIFTSYNC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numeric(e) => write!(f, "run aborted: {e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn run_error(e: Error) -> CliError {
    match e {
        Error::Data(msg) => CliError::Config(ConfigError::single(msg)),
        Error::InvalidParameter(msg) => CliError::Config(ConfigError::single(msg)),
        other => CliError::Numeric(other.to_string()),
    }
}

/// Loads a config and applies the `--seed` override.
pub fn load(config_path: &Path, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = Config::load(config_path)?;
    if let Some(s) = seed {
        cfg.experiment.stream.seed = s;
        for (k, v) in &mut cfg.entries {
            if k == "seed" {
                *v = s.to_string();
            }
        }
    }
    Ok(cfg)
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// What `cmd_run` produced.
#[derive(Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub checks: Vec<Inequality>,
    pub artifacts: Vec<PathBuf>,
}

pub fn cmd_run(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunOutput, CliError> {
    let cfg = load(config_path, seed)?;
    let result = run(&cfg.experiment).map_err(run_error)?;
    let checks = verify_run(&cfg.experiment, &result, None).map_err(run_error)?;

    fs::create_dir_all(out_dir)?;
    let log = out_dir.join(output::RUN_LOG);
    output::write_run_log(&log, &result)?;
    let summary = out_dir.join(output::SUMMARY);
    fs::write(
        &summary,
        output::summary_text(&label(config_path), &cfg.experiment, &cfg.entries, &result, &checks),
    )?;
    let mut artifacts = vec![log, summary];
    let manifest = output::write_manifest(out_dir, &label(config_path), &artifacts)?;
    artifacts.push(manifest);
    Ok(RunOutput {
        result,
        checks,
        artifacts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Delta,
    Period,
    Tau,
}

impl Axis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "delta" => Some(Axis::Delta),
            "period" => Some(Axis::Period),
            "tau" => Some(Axis::Tau),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::Delta => "delta",
            Axis::Period => "period",
            Axis::Tau => "tau",
        }
    }
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        let v: f64 = part
            .parse()
            .map_err(|_| CliError::Config(ConfigError::single(format!("invalid sweep value {part:?}"))))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Config(ConfigError::single("no sweep values")));
    }
    Ok(values)
}

fn positive_integer(axis: Axis, v: f64) -> Result<u64, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(CliError::Config(ConfigError::single(format!(
            "sweep axis {} needs positive integers, got {v}",
            axis.name()
        ))))
    }
}

/// The base config with the swept parameter set to `v`.
pub fn apply_axis(base: &ExperimentConfig, axis: Axis, v: f64) -> Result<ExperimentConfig, CliError> {
    let mut cfg = base.clone();
    let mismatch = |need: &str| {
        CliError::Config(ConfigError::single(format!(
            "sweep axis {} requires {need}",
            axis.name()
        )))
    };
    match axis {
        Axis::Delta => match &mut cfg.strategy {
            SyncStrategy::Dynamic { delta, .. } => *delta = v,
            _ => return Err(mismatch("strategy.kind = dynamic")),
        },
        Axis::Period => match &mut cfg.strategy {
            SyncStrategy::Periodic { period } => *period = positive_integer(axis, v)?,
            _ => return Err(mismatch("strategy.kind = periodic")),
        },
        Axis::Tau => match &mut cfg.learner.compression {
            Compression::Truncate { budget } => *budget = positive_integer(axis, v)? as usize,
            _ => return Err(mismatch("learner.compression = truncate")),
        },
    }
    cfg.validate()
        .map_err(|e| CliError::Config(ConfigError::single(format!("sweep value {v}: {e}"))))?;
    Ok(cfg)
}

/// Thread count from `DRIFTSYNC_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

pub fn sweep_rows(base: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let configs = values
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    let work = || {
        configs
            .par_iter()
            .zip(values.par_iter())
            .map(|(cfg, &v)| run(cfg).map(|r| SweepRow::from_result(v, &r)))
            .collect::<Result<Vec<_>, _>>()
    };
    let rows = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(work),
        None => work(),
    };
    rows.map_err(run_error)
}

pub fn cmd_sweep(
    config_path: &Path,
    axis: Axis,
    values: &[f64],
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Vec<SweepRow>, CliError> {
    let cfg = load(config_path, seed)?;
    let rows = sweep_rows(&cfg.experiment, axis, values)?;
    fs::create_dir_all(out_dir)?;
    let artifacts = output::write_sweep(out_dir, &rows)?;
    output::write_manifest(out_dir, &label(config_path), &artifacts)?;
    Ok(rows)
}

/// Test hook: breaks the ledger so that the consistency checks must fail.
fn corrupt_ledger(result: &mut RunResult) {
    let recs = result.ledger.records_mut();
    let target = recs.iter().position(|r| r.synced).unwrap_or(0);
    if let Some(r) = recs.get_mut(target) {
        r.bytes_up += 1;
    }
}

pub fn cmd_verify(config_path: &Path, seed: Option<u64>, corrupt: bool) -> Result<Vec<Inequality>, CliError> {
    let cfg = load(config_path, seed)?;
    let exp = &cfg.experiment;
    let mut result = run(exp).map_err(run_error)?;
    if corrupt {
        corrupt_ledger(&mut result);
    }
    let companion = match exp.strategy {
        SyncStrategy::Dynamic { .. } => Some(
            run(&exp.with_strategy(SyncStrategy::Periodic { period: 1 })).map_err(run_error)?,
        ),
        _ => None,
    };
    verify_run(exp, &result, companion.as_ref()).map_err(run_error)
}

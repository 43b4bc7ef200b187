//! Artifact writers: run log, summary, sweep tables and the checksum manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use driftsync_core::protocol::Inequality;
use driftsync_core::simulator::{ExperimentConfig, RunResult};

pub const RUN_LOG: &str = "run_log.csv";
pub const SUMMARY: &str = "summary.txt";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_DETAIL: &str = "sweep_detail.csv";
pub const MANIFEST: &str = "manifest.txt";

pub const RUN_LOG_HEADER: [&str; 9] = [
    "t",
    "theta",
    "violations",
    "bytes_up",
    "bytes_down",
    "cum_loss",
    "cum_error",
    "mean_sv_count",
    "divergence_at_check",
];

pub const SWEEP_HEADER: [&str; 6] = [
    "value",
    "cum_loss",
    "cum_error",
    "cum_bytes",
    "violations",
    "quiescence_round",
];

pub const SWEEP_DETAIL_HEADER: [&str; 6] = [
    "value",
    "violated_conditions",
    "mean_compression_error",
    "max_compression_error",
    "final_union_size",
    "peak_bytes",
];

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_run_log(path: &Path, result: &RunResult) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RUN_LOG_HEADER).map_err(csv_err)?;
    for p in &result.series {
        w.write_record([
            p.t.to_string(),
            (p.theta as u8).to_string(),
            p.violations.to_string(),
            p.bytes_up.to_string(),
            p.bytes_down.to_string(),
            p.cum_loss.to_string(),
            p.cum_error.to_string(),
            p.mean_sv_count.to_string(),
            p.divergence_at_check.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn summary_text(
    config_label: &str,
    config: &ExperimentConfig,
    entries: &[(String, String)],
    result: &RunResult,
    checks: &[Inequality],
) -> String {
    let report = result.report(&config.strategy);
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k}: {v}");
    };
    line("config", config_label.to_string());
    line("strategy", config.strategy.name());
    line("learners", result.m.to_string());
    line("rounds", result.rounds.to_string());
    line("shortened", result.shortened.to_string());
    line("cum_loss", result.cum_loss().to_string());
    line("cum_error", result.cum_error().to_string());
    line("cum_bytes", result.cum_bytes().to_string());
    line("bytes_up", result.ledger.total_up().to_string());
    line("bytes_down", result.ledger.total_down().to_string());
    line("peak_bytes", report.peak_bytes.to_string());
    line("syncs", report.syncs.to_string());
    line("violated_conditions", report.violations.to_string());
    line("false_alarms", report.false_alarms.to_string());
    line("control_messages", result.ledger.control_messages().to_string());
    line("quiescence_round", report.quiescence_round.to_string());
    line("drift_sum", report.drift_sum.to_string());
    line("final_union_size", result.final_union_size.to_string());
    line("max_compression_error", result.max_compression_error.to_string());
    line("mean_compression_error", result.mean_compression_error().to_string());
    line(
        "adaptivity_ratio",
        report
            .adaptivity_ratio
            .map_or_else(|| "undefined".to_string(), |r| r.to_string()),
    );
    s.push_str("\n[checks]\n");
    for c in checks {
        let _ = writeln!(s, "{c}");
    }
    s.push_str("\n[config]\n");
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub cum_loss: f64,
    pub cum_error: u64,
    pub cum_bytes: u64,
    /// Synchronizations `V(T)`.
    pub violations: u64,
    pub quiescence_round: u64,
    pub violated_conditions: u64,
    pub mean_compression_error: f64,
    pub max_compression_error: f64,
    pub final_union_size: usize,
    pub peak_bytes: u64,
}

impl SweepRow {
    pub fn from_result(value: f64, r: &RunResult) -> Self {
        SweepRow {
            value,
            cum_loss: r.cum_loss(),
            cum_error: r.cum_error(),
            cum_bytes: r.cum_bytes(),
            violations: r.syncs(),
            quiescence_round: r.ledger.quiescence_round(),
            violated_conditions: r.ledger.violation_count(),
            mean_compression_error: r.mean_compression_error(),
            max_compression_error: r.max_compression_error,
            final_union_size: r.final_union_size,
            peak_bytes: r.ledger.peak_bytes(),
        }
    }
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> io::Result<Vec<PathBuf>> {
    let main = dir.join(SWEEP);
    let mut w = csv::Writer::from_path(&main).map_err(csv_err)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.cum_loss.to_string(),
            r.cum_error.to_string(),
            r.cum_bytes.to_string(),
            r.violations.to_string(),
            r.quiescence_round.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let detail = dir.join(SWEEP_DETAIL);
    let mut w = csv::Writer::from_path(&detail).map_err(csv_err)?;
    w.write_record(SWEEP_DETAIL_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.violated_conditions.to_string(),
            r.mean_compression_error.to_string(),
            r.max_compression_error.to_string(),
            r.final_union_size.to_string(),
            r.peak_bytes.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(vec![main, detail])
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest.txt` listing every artifact with its SHA-256 checksum.
pub fn write_manifest(dir: &Path, config_label: &str, artifacts: &[PathBuf]) -> io::Result<PathBuf> {
    let mut s = format!("config {config_label}\n");
    for a in artifacts {
        let name = a.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let _ = writeln!(s, "{}  {name}", sha256_file(a)?);
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, s)?;
    Ok(path)
}

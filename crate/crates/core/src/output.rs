//! CSV result files.
//!
//! Numbers are written with a fixed number of decimals so output files are
//! byte-stable across runs and platforms. Undefined rates are left empty.

use std::io::Write;
use std::path::Path;

use crate::engine::{RunResult, TrajectoryRow};
use crate::error::SimError;
use crate::metrics::{ClassificationSummary, MetricsPeriodRecord};
use crate::runlog::RunLog;

pub const METRICS_HEADER: [&str; 9] =
    ["period", "t", "fbr_count", "positive_rate", "negative_rate", "ugt_count", "blr", "n_blr", "decision_accuracy"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "node_id", "gt", "label", "blacklisted"];
pub const CLASSIFICATION_HEADER: [&str; 5] = ["event_id", "method", "untrusted", "suspicious", "honest"];

pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CLASSIFICATION_FILE: &str = "classification.csv";
pub const CONFIG_FILE: &str = "config.toml";

pub fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

pub fn fixed_opt(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}

pub fn seconds(t: f64) -> String {
    format!("{t:.1}")
}

pub fn metrics_row(p: &MetricsPeriodRecord) -> [String; 9] {
    [
        p.period_index.to_string(),
        seconds(p.t),
        p.fbr_count.to_string(),
        fixed_opt(p.positive_rate),
        fixed_opt(p.negative_rate),
        p.ugt_count.to_string(),
        fixed_opt(p.blr),
        fixed_opt(p.n_blr),
        fixed_opt(p.decision_accuracy),
    ]
}

pub fn write_metrics<W: Write>(w: W, periods: &[MetricsPeriodRecord]) -> Result<(), SimError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(METRICS_HEADER)?;
    for p in periods {
        csv.write_record(metrics_row(p))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_trajectory<W: Write>(w: W, rows: &[TrajectoryRow]) -> Result<(), SimError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        csv.write_record([
            seconds(r.t),
            r.node.to_string(),
            fixed(r.gt),
            r.label.as_str().to_string(),
            r.blacklisted.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_classification<W: Write>(w: W, summary: &ClassificationSummary) -> Result<(), SimError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CLASSIFICATION_HEADER)?;
    for (event_id, c) in &summary.per_event {
        csv.write_record([
            event_id.to_string(),
            summary.method.label().to_string(),
            c.untrusted.to_string(),
            c.suspicious.to_string(),
            c.honest.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes the run log, the three CSV files and the resolved configuration.
pub fn write_run_dir(dir: &Path, log: &RunLog, result: &RunResult) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    log.write(&dir.join(RUNLOG_FILE))?;
    let file = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
    write_metrics(file(METRICS_FILE)?, &result.periods)?;
    write_trajectory(file(TRAJECTORY_FILE)?, &result.trajectory)?;
    write_classification(file(CLASSIFICATION_FILE)?, &result.classification)?;
    let mut echo = log.header.config.clone();
    echo.seed = log.header.seed;
    std::fs::write(dir.join(CONFIG_FILE), echo.to_toml())?;
    Ok(())
}

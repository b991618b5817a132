//! CSV artifacts. Floats use Rust's shortest round-trip formatting, which
//! is locale independent; lines end in a bare line feed.

use std::path::Path;

use anyhow::{Context, Result};
use implicit_core::train::RunLog;

pub const RUNLOG_HEADER: [&str; 6] = ["iter", "epoch", "split", "loss", "metric_name", "metric_value"];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

/// Writes a table with a header row; every row must match its width.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runlog(path: &Path, log: &RunLog) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .records()
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                r.epoch.to_string(),
                r.split.as_str().to_string(),
                r.loss.to_string(),
                r.metric_name.clone(),
                r.metric_value.to_string(),
            ]
        })
        .collect();
    write_table(path, &RUNLOG_HEADER, &rows)
}

pub fn write_metrics(path: &Path, metrics: &[(String, f64)]) -> Result<()> {
    let rows: Vec<Vec<String>> = metrics.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect();
    write_table(path, &["metric", "value"], &rows)
}

/// Reads a `metric,value` file back into pairs.
pub fn read_metrics(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((rec[0].to_string(), rec[1].parse()?));
    }
    Ok(out)
}

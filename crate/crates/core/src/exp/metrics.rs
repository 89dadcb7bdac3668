//! Per-round metrics and their CSV/JSON serializations.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One evaluation row. Field order matches the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub strategy: String,
    pub clean_accuracy: f64,
    /// Attack success rate; absent when no backdoor is being measured.
    pub asr: Option<f64>,
    /// Holdout accuracy per class, -1 marking classes absent from the
    /// holdout.
    pub per_class_accuracy: Vec<f64>,
    /// Wall time of the aggregate call, milliseconds; 0 for round zero.
    pub agg_wall_ms: f64,
}

pub const CSV_HEADER: &str = "round,strategy,clean_accuracy,asr,per_class_accuracy,agg_wall_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(
                "format",
                format!("expected \"csv\" or \"json\", got \"{other}\""),
            )),
        }
    }
}

pub fn to_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let asr = row.asr.map(|v| v.to_string()).unwrap_or_default();
        let per_class = row
            .per_class_accuracy
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.round, row.strategy, row.clean_accuracy, asr, per_class, row.agg_wall_ms
        );
    }
    out
}

pub fn to_json(rows: &[RoundMetrics]) -> String {
    serde_json::to_string_pretty(rows).expect("metrics serialize")
}

/// Writes the rows to `path` in the chosen format. I/O failures carry the
/// path.
pub fn write_metrics(rows: &[RoundMetrics], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        OutputFormat::Csv => to_csv(rows),
        OutputFormat::Json => to_json(rows),
    };
    std::fs::write(path, text)
        .map_err(|e| Error::invalid(path.display().to_string(), e.to_string()))
}

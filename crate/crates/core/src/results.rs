//! `AllResults.csv`: one summary line per finished acquisition session.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALL_RESULTS_FILE: &str = "AllResults.csv";

pub const ALL_RESULTS_HEADER: [&str; 8] = [
    "timestamp",
    "algorithm",
    "iterations",
    "gross_joules",
    "wall_seconds",
    "joules_per_1000",
    "seconds_per_1000",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Ok,
    /// Ended by idle timeout, repeated meter failures or a superseding GETREADY.
    Truncated,
    NoData,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Ok => "ok",
            SessionStatus::Truncated => "truncated",
            SessionStatus::NoData => "no-data",
        }
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(SessionStatus::Ok),
            "truncated" => Ok(SessionStatus::Truncated),
            "no-data" => Ok(SessionStatus::NoData),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub timestamp: String,
    pub algorithm: String,
    pub iterations: u64,
    pub gross_joules: f64,
    pub wall_seconds: f64,
    pub joules_per_1000: f64,
    pub seconds_per_1000: f64,
    pub status: SessionStatus,
}

impl SummaryRow {
    pub fn new(
        timestamp: impl Into<String>,
        algorithm: impl Into<String>,
        iterations: u64,
        gross_joules: f64,
        wall_seconds: f64,
        status: SessionStatus,
    ) -> Self {
        let per_1000 = |x: f64| {
            if iterations == 0 {
                0.0
            } else {
                x / iterations as f64 * 1000.0
            }
        };
        Self {
            timestamp: timestamp.into(),
            algorithm: algorithm.into(),
            iterations,
            gross_joules,
            wall_seconds,
            joules_per_1000: per_1000(gross_joules),
            seconds_per_1000: per_1000(wall_seconds),
            status,
        }
    }

    fn record(&self) -> [String; 8] {
        [
            self.timestamp.clone(),
            self.algorithm.clone(),
            self.iterations.to_string(),
            format!("{:.4}", self.gross_joules),
            format!("{:.3}", self.wall_seconds),
            format!("{:.4}", self.joules_per_1000),
            format!("{:.4}", self.seconds_per_1000),
            self.status.to_string(),
        ]
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Append one row, writing the header first when the file is new or empty.
pub fn append_summary(path: &Path, row: &SummaryRow) -> Result<(), ResultsError> {
    let io_err = |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    };
    let csv_err = |source| ResultsError::Csv {
        path: path.display().to_string(),
        source,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    let empty = file.metadata().map_err(io_err)?.len() == 0;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if empty {
        writer.write_record(ALL_RESULTS_HEADER).map_err(csv_err)?;
    }
    writer.write_record(row.record()).map_err(csv_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

pub fn write_summaries<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(ALL_RESULTS_HEADER)?;
    for row in rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<Vec<SummaryRow>, ResultsError> {
    let csv_err = |source| ResultsError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    reader
        .deserialize()
        .collect::<Result<Vec<SummaryRow>, _>>()
        .map_err(csv_err)
}

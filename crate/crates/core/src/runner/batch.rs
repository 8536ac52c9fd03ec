use std::fmt;

use thiserror::Error;

/// One `<algorithm>,<iterations>` line of a batch file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchLine {
    pub algorithm_label: String,
    pub iterations: u64,
}

impl fmt::Display for BatchLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.algorithm_label, self.iterations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct BatchParseError {
    pub line: usize,
    pub reason: String,
}

/// Parse a batch file. Blank lines and `#` comments are skipped. Lines split
/// at the last comma, since genpkey descriptors contain spaces and colons
/// but never commas.
pub fn parse_batch_file(text: &str) -> Result<Vec<BatchLine>, BatchParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| BatchParseError { line: i + 1, reason };
        let (algorithm, count) = line
            .rsplit_once(',')
            .ok_or_else(|| err(format!("expected <algorithm>,<iterations>, got {line:?}")))?;
        let algorithm = algorithm.trim();
        if algorithm.is_empty() {
            return Err(err("empty algorithm".into()));
        }
        let iterations: u64 = count
            .trim()
            .parse()
            .map_err(|_| err(format!("iterations {:?} is not a positive integer", count.trim())))?;
        if iterations == 0 {
            return Err(err("iterations must be at least 1".into()));
        }
        lines.push(BatchLine {
            algorithm_label: algorithm.to_owned(),
            iterations,
        });
    }
    Ok(lines)
}

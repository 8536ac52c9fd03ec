use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::AnalysisError;

const BUILTIN_LEVELS: &str = include_str!("../../data/levels.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    // Declaration order is the row order inside one security level.
    EllipticCurve,
    PostQuantum,
    Classic,
}

impl Category {
    pub fn display_name(self) -> &'static str {
        match self {
            Category::Classic => "Classic Technology",
            Category::EllipticCurve => "Elliptic Curve Cryptography",
            Category::PostQuantum => "Post-quantum Technology",
        }
    }

    /// Bar colour in the charts.
    pub fn color(self) -> &'static str {
        match self {
            Category::PostQuantum => "#1f77b4",
            Category::EllipticCurve => "#2ca02c",
            Category::Classic => "#ff7f0e",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Equivalent symmetric strength, possibly approximate (`~128`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivBits {
    pub bits: u32,
    pub approximate: bool,
}

impl FromStr for EquivBits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (approximate, digits) = match s.strip_prefix('~') {
            Some(rest) => (true, rest.trim()),
            None => (false, s),
        };
        let bits = digits
            .parse()
            .map_err(|_| format!("equivalent bits {s:?} is not a number"))?;
        Ok(Self { bits, approximate })
    }
}

impl fmt::Display for EquivBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.approximate {
            write!(f, "~{}", self.bits)
        } else {
            write!(f, "{}", self.bits)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityLevelEntry {
    pub protocol: String,
    pub nist_level: u8,
    pub category: Category,
    pub equiv_bits: EquivBits,
    pub labels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    protocol: String,
    level: u8,
    category: Category,
    equiv_bits: String,
    #[serde(default)]
    labels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    algorithm: Vec<RawEntry>,
}

/// Algorithm label to security-level entry. Each label maps to exactly one
/// entry; labels are compared with internal whitespace collapsed.
#[derive(Debug, Clone)]
pub struct LevelMap {
    entries: Vec<SecurityLevelEntry>,
    index: HashMap<String, usize>,
}

fn normalize(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl LevelMap {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_LEVELS).expect("built-in level table is valid")
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let raw: RawMap = toml::from_str(text).map_err(|e| AnalysisError::Levels(e.to_string()))?;
        let entries = raw
            .algorithm
            .into_iter()
            .map(|r| {
                if !(1..=5).contains(&r.level) {
                    return Err(AnalysisError::Levels(format!(
                        "{}: level {} outside 1..=5",
                        r.protocol, r.level
                    )));
                }
                Ok(SecurityLevelEntry {
                    equiv_bits: r.equiv_bits.parse().map_err(AnalysisError::Levels)?,
                    protocol: r.protocol,
                    nist_level: r.level,
                    category: r.category,
                    labels: r.labels,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(entries)
    }

    pub fn new(entries: Vec<SecurityLevelEntry>) -> Result<Self, AnalysisError> {
        let mut index = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            for label in std::iter::once(&entry.protocol).chain(&entry.labels) {
                if let Some(prev) = index.insert(normalize(label), i) {
                    if prev != i {
                        return Err(AnalysisError::Levels(format!(
                            "label {label:?} maps to both {:?} and {:?}",
                            entries[prev].protocol, entry.protocol
                        )));
                    }
                }
            }
        }
        Ok(Self { entries, index })
    }

    pub fn entries(&self) -> &[SecurityLevelEntry] {
        &self.entries
    }

    /// Entry and its position in the map.
    pub fn lookup(&self, label: &str) -> Option<(usize, &SecurityLevelEntry)> {
        self.index
            .get(&normalize(label))
            .map(|&i| (i, &self.entries[i]))
    }
}

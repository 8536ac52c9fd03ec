use std::collections::BTreeMap;
use std::io::Write;

use super::chart::{ChartBar, ChartData, ChartMetric};
use super::levels::{Category, EquivBits, LevelMap};
use super::{AnalysisError, ExperimentResult};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub nist_level: u8,
    pub protocol: String,
    pub category: Category,
    pub equiv_bits: EquivBits,
    pub joules_per_1000: f64,
    pub seconds_per_1000: f64,
    pub runs: usize,
    pub iterations: u64,
}

/// Rows ordered by level, then category, then the level map's own order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelTable {
    pub rows: Vec<LevelRow>,
}

/// Group results by security-level entry. Repeated runs of one algorithm are
/// pooled: total net joules over total iterations.
pub fn level_table(
    results: &[ExperimentResult],
    level_map: &LevelMap,
) -> Result<LevelTable, AnalysisError> {
    let mut groups: BTreeMap<(u8, Category, usize), Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        let (index, entry) = level_map
            .lookup(&r.algorithm_label)
            .ok_or_else(|| AnalysisError::Unmapped(r.algorithm_label.clone()))?;
        groups
            .entry((entry.nist_level, entry.category, index))
            .or_default()
            .push(r);
    }

    let rows = groups
        .into_iter()
        .map(|((_, _, index), mut runs)| {
            // Fixed summation order keeps the output independent of input order.
            runs.sort_by(|a, b| {
                (&a.algorithm_label, a.iterations, a.net_joules.to_bits(), a.wall_seconds.to_bits())
                    .cmp(&(&b.algorithm_label, b.iterations, b.net_joules.to_bits(), b.wall_seconds.to_bits()))
            });
            let iterations: u64 = runs.iter().map(|r| r.iterations).sum();
            let net: f64 = runs.iter().map(|r| r.net_joules).sum();
            let wall: f64 = runs.iter().map(|r| r.wall_seconds).sum();
            let entry = &level_map.entries()[index];
            LevelRow {
                nist_level: entry.nist_level,
                protocol: entry.protocol.clone(),
                category: entry.category,
                equiv_bits: entry.equiv_bits,
                joules_per_1000: net / iterations as f64 * 1000.0,
                seconds_per_1000: wall / iterations as f64 * 1000.0,
                runs: runs.len(),
                iterations,
            }
        })
        .collect();
    Ok(LevelTable { rows })
}

impl LevelTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "level",
            "protocol",
            "category",
            "equiv_bits",
            "joules_per_1000",
            "seconds_per_1000",
            "runs",
            "iterations",
        ])?;
        for row in &self.rows {
            w.write_record([
                row.nist_level.to_string(),
                row.protocol.clone(),
                row.category.display_name().to_owned(),
                row.equiv_bits.to_string(),
                format!("{:.2}", row.joules_per_1000),
                format!("{:.4}", row.seconds_per_1000),
                row.runs.to_string(),
                row.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Console rendering, one block per level.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{:<7} {:<36} {:<28} {:>16}\n",
            "Level", "Protocol", "Category", "J/1,000 keygens"
        );
        let mut last_level = None;
        for row in &self.rows {
            let level = if last_level == Some(row.nist_level) {
                String::new()
            } else {
                format!("Level {}", row.nist_level)
            };
            last_level = Some(row.nist_level);
            out.push_str(&format!(
                "{:<7} {:<36} {:<28} {:>16.2}\n",
                level,
                row.protocol,
                row.category.display_name(),
                row.joules_per_1000
            ));
        }
        out
    }

    pub fn chart(&self, metric: ChartMetric) -> ChartData {
        let bars = self
            .rows
            .iter()
            .map(|row| {
                let value = match metric {
                    ChartMetric::Energy => row.joules_per_1000,
                    ChartMetric::Time => row.seconds_per_1000,
                };
                ChartBar {
                    nist_level: row.nist_level,
                    protocol: row.protocol.clone(),
                    category: row.category,
                    value,
                    log10_value: if value > 0.0 { Some(value.log10()) } else { None },
                    color: row.category.color().to_owned(),
                }
            })
            .collect();
        ChartData { metric, bars }
    }
}

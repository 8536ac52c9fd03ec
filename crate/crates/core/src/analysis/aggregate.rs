use std::fs;
use std::path::{Path, PathBuf};

use super::chart::{render_svg, ChartMetric};
use super::fleet::FleetReport;
use super::levels::LevelMap;
use super::table::{level_table, LevelTable};
use super::{fit_baseline, net_rate, AnalysisError, BaselineModel, ExperimentResult};
use crate::results::{read_summaries, SessionStatus, SummaryRow};

pub const NULL_LABEL: &str = "NULL";

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub baseline: BaselineModel,
    /// No NULL runs were available, so gross energy is reported as net.
    pub uncorrected: bool,
    pub results: Vec<ExperimentResult>,
    pub table: LevelTable,
    /// Rows left out because their session did not complete cleanly.
    pub skipped: Vec<SummaryRow>,
}

/// Fit the baseline from NULL rows and correct every workload row.
pub fn aggregate(
    all_results: &Path,
    null_label: &str,
    level_map: &LevelMap,
) -> Result<AnalysisReport, AnalysisError> {
    analyze_rows(read_summaries(all_results)?, null_label, level_map)
}

pub fn analyze_rows(
    rows: Vec<SummaryRow>,
    null_label: &str,
    level_map: &LevelMap,
) -> Result<AnalysisReport, AnalysisError> {
    let (usable, skipped): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .partition(|r| r.status == SessionStatus::Ok && r.iterations > 0 && r.wall_seconds > 0.0);
    let (nulls, workloads): (Vec<_>, Vec<_>) =
        usable.into_iter().partition(|r| r.algorithm == null_label);

    let null_runs: Vec<(f64, f64)> = nulls.iter().map(|r| (r.gross_joules, r.wall_seconds)).collect();
    let (baseline, uncorrected) = if null_runs.is_empty() {
        (BaselineModel::zero(), true)
    } else {
        (fit_baseline(&null_runs)?, false)
    };

    let results = workloads
        .iter()
        .map(|r| net_rate(&r.algorithm, r.gross_joules, r.wall_seconds, r.iterations, &baseline))
        .collect::<Result<Vec<_>, _>>()?;
    let table = level_table(&results, level_map)?;
    Ok(AnalysisReport {
        baseline,
        uncorrected,
        results,
        table,
        skipped,
    })
}

impl AnalysisReport {
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        if self.uncorrected {
            out.push_str("Baseline: none (no NULL runs); rates are uncorrected gross energy\n");
        } else {
            out.push_str(&format!(
                "Baseline: {:.4} W from {} NULL run(s) over {:.1} s\n",
                self.baseline.background_watts, self.baseline.source_runs, self.baseline.total_null_seconds
            ));
        }
        let clamped = self.results.iter().filter(|r| r.clamped).count();
        if clamped > 0 {
            out.push_str(&format!("{clamped} run(s) fell below the baseline and were clamped to 0 J\n"));
        }
        if !self.skipped.is_empty() {
            out.push_str(&format!("{} incomplete row(s) skipped\n", self.skipped.len()));
        }
        out.push('\n');
        out.push_str(&self.table.render_text());
        out
    }
}

/// Write `level_table.csv`, both charts (SVG plus JSON data) and, when given,
/// `fleet_report.txt`. Returns the files written.
pub fn write_outputs(
    report: &AnalysisReport,
    out_dir: &Path,
    fleet: Option<&FleetReport>,
) -> Result<Vec<PathBuf>, AnalysisError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| AnalysisError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();

    let table_path = out_dir.join("level_table.csv");
    let file = fs::File::create(&table_path).map_err(io(&table_path))?;
    report
        .table
        .write_csv(file)
        .map_err(|e| AnalysisError::Io {
            path: table_path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
    written.push(table_path);

    for (metric, stem) in [(ChartMetric::Energy, "chart_energy"), (ChartMetric::Time, "chart_time")] {
        let data = report.table.chart(metric);
        let svg = out_dir.join(format!("{stem}.svg"));
        fs::write(&svg, render_svg(&data)).map_err(io(&svg))?;
        let json = out_dir.join(format!("{stem}.json"));
        let body = serde_json::to_string_pretty(&data).expect("chart data serializes");
        fs::write(&json, body).map_err(io(&json))?;
        written.extend([svg, json]);
    }

    if let Some(fleet) = fleet {
        let path = out_dir.join("fleet_report.txt");
        fs::write(&path, fleet.to_string()).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::write_summaries;

    fn row(algo: &str, iters: u64, gross: f64, wall: f64, status: SessionStatus) -> SummaryRow {
        SummaryRow::new("2025-05-07T13:32:28Z", algo, iters, gross, wall, status)
    }

    #[test]
    fn only_null_rows() {
        let report = analyze_rows(
            vec![row("NULL", 1000, 360.0, 120.0, SessionStatus::Ok)],
            NULL_LABEL,
            &LevelMap::builtin(),
        )
        .unwrap();
        assert!(report.results.is_empty());
        assert!(report.table.rows.is_empty());
        assert_eq!(report.baseline.background_watts, 3.0);
        assert!(!report.uncorrected);
    }

    #[test]
    fn no_null_rows_is_uncorrected() {
        let report = analyze_rows(
            vec![row("ML-KEM-512", 1000, 36.0, 10.0, SessionStatus::Ok)],
            NULL_LABEL,
            &LevelMap::builtin(),
        )
        .unwrap();
        assert!(report.uncorrected);
        assert_eq!(report.results[0].net_joules, 36.0);
        assert!(report.summary_text().contains("uncorrected"));
    }

    #[test]
    fn incomplete_rows_are_skipped() {
        let report = analyze_rows(
            vec![
                row("NULL", 1000, 360.0, 120.0, SessionStatus::Ok),
                row("NULL", 1000, 1.0, 120.0, SessionStatus::Truncated),
                row("ML-KEM-512", 1000, 0.0, 0.0, SessionStatus::NoData),
                row("ML-KEM-512", 1000, 66.0, 10.0, SessionStatus::Ok),
            ],
            NULL_LABEL,
            &LevelMap::builtin(),
        )
        .unwrap();
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.baseline.source_runs, 1);
        assert_eq!(report.results.len(), 1);
        assert_eq!(report.results[0].net_joules, 36.0);
    }

    #[test]
    fn write_then_aggregate_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("AllResults.csv");
        let rows = vec![
            row("NULL", 2000, 150.0, 50.0, SessionStatus::Ok),
            row("ML-DSA-65", 100_000, 1000.0, 60.0, SessionStatus::Ok),
            row("RSA -pkeyopt rsa_keygen_bits:3072", 50, 1300.0, 100.0, SessionStatus::Ok),
        ];
        write_summaries(fs::File::create(&path).unwrap(), &rows).unwrap();
        let report = aggregate(&path, NULL_LABEL, &LevelMap::builtin()).unwrap();
        assert_eq!(report.results.len(), 2);
        assert_eq!(report.results[0].algorithm_label, "ML-DSA-65");
        assert_eq!(format!("{:.4}", report.results[0].gross_joules), "1000.0000");
        assert_eq!(format!("{:.2}", report.results[0].joules_per_1000_net), "8.20");
        assert_eq!(format!("{:.2}", report.results[1].joules_per_1000_net), "20000.00");

        let out = dir.path().join("out");
        let written = write_outputs(&report, &out, None).unwrap();
        assert_eq!(written.len(), 5);
        let csv = fs::read_to_string(out.join("level_table.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("4,ML-DSA-65"), "{csv}");
        assert!(csv.lines().nth(2).unwrap().starts_with("4,RSA-3072"), "{csv}");
    }
}

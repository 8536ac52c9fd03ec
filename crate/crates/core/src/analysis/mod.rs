//! Baseline-corrected energy rates, security-level tables, charts and fleet
//! extrapolation.
//!
//! Energy is read from the meter as cumulative milliwatt-hours and converted
//! with `J = mWh × 3.6`. Background power is fitted from NULL runs as a
//! duration-weighted mean and subtracted as `P₀ · T` from each workload run.

mod aggregate;
mod chart;
mod fleet;
mod levels;
mod table;

use thiserror::Error;

pub use aggregate::{aggregate, analyze_rows, write_outputs, AnalysisReport, NULL_LABEL};
pub use chart::{render_svg, ChartBar, ChartData, ChartMetric};
pub use fleet::{fleet_savings, FleetReport, FleetScenario};
pub use levels::{Category, EquivBits, LevelMap, SecurityLevelEntry};
pub use table::{level_table, LevelRow, LevelTable};

use crate::results::ResultsError;

pub const JOULES_PER_MWH: f64 = 3.6;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("energy must be non-negative, got {0} mWh")]
    NegativeEnergy(f64),
    #[error("baseline needs at least one NULL run")]
    EmptyBaseline,
    #[error("run {index}: duration {seconds} s must be positive")]
    NonPositiveDuration { index: usize, seconds: f64 },
    #[error("wall time {0} s must be positive")]
    NonPositiveWall(f64),
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("algorithm {0:?} has no security-level entry")]
    Unmapped(String),
    #[error("invalid level map: {0}")]
    Levels(String),
    #[error("invalid fleet scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub fn mwh_to_joules(mwh: f64) -> Result<f64, AnalysisError> {
    if mwh.is_nan() || mwh < 0.0 {
        return Err(AnalysisError::NegativeEnergy(mwh));
    }
    Ok(mwh * JOULES_PER_MWH)
}

/// Average background power of the platform, fitted from NULL runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineModel {
    pub background_watts: f64,
    pub source_runs: usize,
    pub total_null_seconds: f64,
}

impl BaselineModel {
    pub fn zero() -> Self {
        Self {
            background_watts: 0.0,
            source_runs: 0,
            total_null_seconds: 0.0,
        }
    }
}

/// Duration-weighted mean power over `(gross_joules, wall_seconds)` pairs.
pub fn fit_baseline(null_runs: &[(f64, f64)]) -> Result<BaselineModel, AnalysisError> {
    if null_runs.is_empty() {
        return Err(AnalysisError::EmptyBaseline);
    }
    let mut joules = 0.0;
    let mut seconds = 0.0;
    for (index, &(gross, wall)) in null_runs.iter().enumerate() {
        if !(wall > 0.0) {
            return Err(AnalysisError::NonPositiveDuration {
                index,
                seconds: wall,
            });
        }
        if gross.is_nan() || gross < 0.0 {
            return Err(AnalysisError::NegativeEnergy(gross / JOULES_PER_MWH));
        }
        joules += gross;
        seconds += wall;
    }
    Ok(BaselineModel {
        background_watts: joules / seconds,
        source_runs: null_runs.len(),
        total_null_seconds: seconds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub algorithm_label: String,
    pub iterations: u64,
    pub gross_joules: f64,
    pub wall_seconds: f64,
    pub net_joules: f64,
    pub joules_per_1000_net: f64,
    pub seconds_per_1000: f64,
    /// Background exceeded the gross energy and net was clamped to zero.
    pub clamped: bool,
}

pub fn net_rate(
    algorithm_label: &str,
    gross_joules: f64,
    wall_seconds: f64,
    iterations: u64,
    baseline: &BaselineModel,
) -> Result<ExperimentResult, AnalysisError> {
    if iterations == 0 {
        return Err(AnalysisError::ZeroIterations);
    }
    if !(wall_seconds > 0.0) {
        return Err(AnalysisError::NonPositiveWall(wall_seconds));
    }
    let raw_net = gross_joules - baseline.background_watts * wall_seconds;
    let clamped = raw_net < 0.0;
    let net_joules = raw_net.max(0.0);
    let per_1000 = 1000.0 / iterations as f64;
    Ok(ExperimentResult {
        algorithm_label: algorithm_label.to_owned(),
        iterations,
        gross_joules,
        wall_seconds,
        net_joules,
        joules_per_1000_net: net_joules * per_1000,
        seconds_per_1000: wall_seconds * per_1000,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mwh_conversion() {
        assert_eq!(mwh_to_joules(0.0).unwrap(), 0.0);
        assert_eq!(mwh_to_joules(100.0).unwrap(), 360.0);
        assert!(matches!(mwh_to_joules(-1.0), Err(AnalysisError::NegativeEnergy(_))));
        assert!(mwh_to_joules(f64::NAN).is_err());
        // 856,111 Wh back to joules: about 3.082 GJ
        let joules = mwh_to_joules(856_111_000.0).unwrap();
        assert!((joules - 3.082e9).abs() < 0.001e9);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(fit_baseline(&[(360.0, 120.0)]).unwrap().background_watts, 3.0);
        let b = fit_baseline(&[(360.0, 120.0), (720.0, 240.0)]).unwrap();
        assert_eq!(b.background_watts, 3.0);
        assert_eq!(b.source_runs, 2);
        assert_eq!(b.total_null_seconds, 360.0);
        assert!(matches!(fit_baseline(&[]), Err(AnalysisError::EmptyBaseline)));
        assert!(matches!(
            fit_baseline(&[(1.0, 1.0), (1.0, 0.0)]),
            Err(AnalysisError::NonPositiveDuration { index: 1, .. })
        ));
    }

    #[test]
    fn baseline_is_duration_weighted() {
        // 1 W for 100 s and 4 W for 300 s: 1300 J / 400 s, not the mean of 1 and 4.
        let b = fit_baseline(&[(100.0, 100.0), (1200.0, 300.0)]).unwrap();
        assert_eq!(b.background_watts, 3.25);
    }

    #[test]
    fn net_rate_examples() {
        let base = BaselineModel {
            background_watts: 3.0,
            source_runs: 1,
            total_null_seconds: 100.0,
        };
        let r = net_rate("NULL", 300.0, 100.0, 1000, &base).unwrap();
        assert_eq!((r.net_joules, r.joules_per_1000_net, r.clamped), (0.0, 0.0, false));

        let zero = BaselineModel::zero();
        let kem = net_rate("ML-KEM-512", 3805.0, 1000.0, 500_000, &zero).unwrap();
        assert_eq!(format!("{:.2}", kem.joules_per_1000_net), "7.61");
        let rsa = net_rate("RSA-4096", 2390.4, 50.0, 200, &zero).unwrap();
        assert!((rsa.joules_per_1000_net - 11952.0).abs() < 1e-9);
        assert_eq!(rsa.seconds_per_1000, 250.0);

        let low = net_rate("x", 10.0, 100.0, 10, &base).unwrap();
        assert!(low.clamped);
        assert_eq!(low.net_joules, 0.0);

        assert!(matches!(net_rate("x", 1.0, 0.0, 1, &zero), Err(AnalysisError::NonPositiveWall(_))));
        assert!(matches!(net_rate("x", 1.0, 1.0, 0, &zero), Err(AnalysisError::ZeroIterations)));
    }

    proptest! {
        #[test]
        fn unit_ratio_is_exact(x in 1e-6f64..1e12) {
            prop_assert!((mwh_to_joules(x).unwrap() / x - 3.6).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn rate_is_linear(e in 0.0f64..1e6, n in 1u64..1_000_000, k in 1u64..100) {
            let zero = BaselineModel::zero();
            let base = net_rate("x", e, 10.0, n, &zero).unwrap().joules_per_1000_net;
            let scaled_e = net_rate("x", k as f64 * e, 10.0, n, &zero).unwrap().joules_per_1000_net;
            let scaled_n = net_rate("x", e, 10.0, k * n, &zero).unwrap().joules_per_1000_net;
            let tol = 1e-9 * base.abs().max(1e-300);
            prop_assert!((scaled_e - k as f64 * base).abs() <= tol * k as f64);
            prop_assert!((scaled_n - base / k as f64).abs() <= tol);
        }
    }
}

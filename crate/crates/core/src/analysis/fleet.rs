use std::fmt;
use std::path::Path;

use serde::Deserialize;

use super::AnalysisError;

const JOULES_PER_KWH: f64 = 3.6e6;

/// Annual key-generation volume moved from one algorithm to another.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetScenario {
    pub keygens_per_year: f64,
    pub from_joules_per_key: f64,
    pub to_joules_per_key: f64,
    pub price_per_kwh: f64,
    #[serde(default = "default_currency")]
    pub currency: String,
    #[serde(default = "default_from")]
    pub from_label: String,
    #[serde(default = "default_to")]
    pub to_label: String,
}

fn default_currency() -> String {
    "GBP".into()
}
fn default_from() -> String {
    "from".into()
}
fn default_to() -> String {
    "to".into()
}

impl FleetScenario {
    pub fn new(keygens_per_year: f64, from_joules_per_key: f64, to_joules_per_key: f64, price_per_kwh: f64) -> Self {
        Self {
            keygens_per_year,
            from_joules_per_key,
            to_joules_per_key,
            price_per_kwh,
            currency: default_currency(),
            from_label: default_from(),
            to_label: default_to(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        toml::from_str(text).map_err(|e| AnalysisError::Scenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetReport {
    pub scenario: FleetScenario,
    pub annual_kwh_from: f64,
    pub annual_kwh_to: f64,
    pub annual_cost_from: f64,
    pub annual_cost_to: f64,
    /// How many times less energy the target needs per key.
    pub multiplier: f64,
}

pub fn fleet_savings(scenario: &FleetScenario) -> Result<FleetReport, AnalysisError> {
    if scenario.to_joules_per_key == 0.0 {
        return Err(AnalysisError::Scenario("to_joules_per_key must not be zero".into()));
    }
    for (name, v) in [
        ("keygens_per_year", scenario.keygens_per_year),
        ("from_joules_per_key", scenario.from_joules_per_key),
        ("to_joules_per_key", scenario.to_joules_per_key),
        ("price_per_kwh", scenario.price_per_kwh),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(AnalysisError::Scenario(format!("{name} must be positive, got {v}")));
        }
    }
    let kwh = |j_per_key: f64| scenario.keygens_per_year * j_per_key / JOULES_PER_KWH;
    let annual_kwh_from = kwh(scenario.from_joules_per_key);
    let annual_kwh_to = kwh(scenario.to_joules_per_key);
    Ok(FleetReport {
        scenario: scenario.clone(),
        annual_kwh_from,
        annual_kwh_to,
        annual_cost_from: annual_kwh_from * scenario.price_per_kwh,
        annual_cost_to: annual_kwh_to * scenario.price_per_kwh,
        multiplier: scenario.from_joules_per_key / scenario.to_joules_per_key,
    })
}

impl fmt::Display for FleetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.scenario;
        writeln!(f, "Fleet key-generation energy estimate")?;
        writeln!(f, "  key generations per year: {:.4e}", s.keygens_per_year)?;
        writeln!(f, "  price per kWh:            {:.4} {}", s.price_per_kwh, s.currency)?;
        writeln!(
            f,
            "  {:<10} {:>12.6} J/key  {:>14.2} kWh/yr  {:>14.2} {}/yr",
            s.from_label, s.from_joules_per_key, self.annual_kwh_from, self.annual_cost_from, s.currency
        )?;
        writeln!(
            f,
            "  {:<10} {:>12.6} J/key  {:>14.2} kWh/yr  {:>14.2} {}/yr",
            s.to_label, s.to_joules_per_key, self.annual_kwh_to, self.annual_cost_to, s.currency
        )?;
        writeln!(
            f,
            "  saving: {:.2} kWh/yr, {:.2} {}/yr; {} uses {:.1}x less energy per key",
            self.annual_kwh_from - self.annual_kwh_to,
            self.annual_cost_from - self.annual_cost_to,
            s.currency,
            s.to_label,
            self.multiplier
        )
    }
}

//! Panel data containers, estimation settings and pre-estimation validation.

use nalgebra::DMatrix;

use crate::error::{PmeError, Result};
use crate::longrun::IdentificationScheme;

/// One cross-section unit: `T_i` observations on `m` variables.
///
/// Row `t` of `values` is the observation at `times[t]`. Times are integer
/// period indices; a well-formed unit has stride exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSeries {
    unit_id: String,
    times: Vec<i64>,
    values: DMatrix<f64>,
}

impl UnitSeries {
    /// Consecutive observations starting at `start_time`.
    pub fn consecutive(unit_id: impl Into<String>, start_time: i64, values: DMatrix<f64>) -> Self {
        let times = (0..values.nrows() as i64).map(|k| start_time + k).collect();
        UnitSeries {
            unit_id: unit_id.into(),
            times,
            values,
        }
    }

    /// Observations at explicit (strictly increasing) time indices, which may contain gaps.
    pub fn with_times(unit_id: impl Into<String>, times: Vec<i64>, values: DMatrix<f64>) -> Result<Self> {
        if times.len() != values.nrows() {
            return Err(PmeError::Input(format!(
                "{} time stamps for {} rows",
                times.len(),
                values.nrows()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PmeError::Input("time stamps must be strictly increasing".into()));
        }
        Ok(UnitSeries {
            unit_id: unit_id.into(),
            times,
            values,
        })
    }

    pub fn unit_id(&self) -> &str {
        &self.unit_id
    }

    pub fn start_time(&self) -> i64 {
        self.times.first().copied().unwrap_or(0)
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of observations `T_i`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// First index `k` such that `times[k+1] != times[k] + 1`.
    pub fn first_gap(&self) -> Option<usize> {
        self.times.windows(2).position(|w| w[1] != w[0] + 1)
    }

    pub(crate) fn map_values(&self, values: DMatrix<f64>) -> UnitSeries {
        UnitSeries {
            unit_id: self.unit_id.clone(),
            times: self.times.clone(),
            values,
        }
    }
}

/// `n` units observed on the same `m` variables, possibly over different spans.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<UnitSeries>,
    variable_names: Vec<String>,
}

impl PanelDataset {
    pub fn new(units: Vec<UnitSeries>, variable_names: Vec<String>) -> Result<Self> {
        if units.is_empty() {
            return Err(PmeError::Input("panel has no units".into()));
        }
        let m = variable_names.len();
        if m == 0 {
            return Err(PmeError::Input("panel has no variables".into()));
        }
        if let Some(u) = units.iter().find(|u| u.m() != m) {
            return Err(PmeError::Input(format!(
                "unit {} has {} variables, expected {m}",
                u.unit_id(),
                u.m()
            )));
        }
        Ok(PanelDataset {
            units,
            variable_names,
        })
    }

    /// Panel with default variable names `w1..wm`.
    pub fn from_units(units: Vec<UnitSeries>) -> Result<Self> {
        let m = units.first().map(|u| u.m()).unwrap_or(0);
        let names = (1..=m).map(|k| format!("w{k}")).collect();
        Self::new(units, names)
    }

    pub fn units(&self) -> &[UnitSeries] {
        &self.units
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn m(&self) -> usize {
        self.variable_names.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.units.iter().map(UnitSeries::len).collect()
    }

    pub fn is_balanced(&self) -> bool {
        let t0 = self.units[0].len();
        self.units.iter().all(|u| u.len() == t0)
    }

    pub(crate) fn with_units(&self, units: Vec<UnitSeries>) -> PanelDataset {
        PanelDataset {
            units,
            variable_names: self.variable_names.clone(),
        }
    }
}

/// How many sub-samples each unit is split into.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleRule {
    Fixed(usize),
    /// `floor(max(2, T_i^{1/3}))`, evaluated per unit.
    Auto,
}

impl SubsampleRule {
    pub fn for_length(self, t_i: usize) -> usize {
        match self {
            SubsampleRule::Fixed(q) => q,
            SubsampleRule::Auto => (t_i as f64).cbrt().max(2.0).floor() as usize,
        }
    }
}

/// Which panel-average time dimension enters the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeAverage {
    #[default]
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub q: SubsampleRule,
    /// Threshold exponent.
    pub delta: f64,
    /// Threshold scale.
    pub c: f64,
    /// Fixed number of relations; skips selection when set.
    pub rank: Option<usize>,
    pub identification: IdentificationScheme,
    /// Null values for the t-tests on the free coefficients, `(m-r) x r`.
    pub null_values: Option<DMatrix<f64>>,
    pub scale_for_selection: bool,
    pub threshold_t: TimeAverage,
    /// Warn about units shorter than this fraction of the longest unit.
    pub min_relative_length: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            q: SubsampleRule::Fixed(2),
            delta: 0.25,
            c: 1.0,
            rank: None,
            identification: IdentificationScheme::Normalized,
            null_values: None,
            scale_for_selection: true,
            threshold_t: TimeAverage::Arithmetic,
            min_relative_length: None,
        }
    }
}

impl EstimationConfig {
    /// Checks the scalar settings; panel-dependent checks live in [`validate`].
    pub fn check(&self) -> Result<()> {
        if let SubsampleRule::Fixed(q) = self.q {
            if q < 2 {
                return Err(PmeError::Input(format!("q must be at least 2, got {q}")));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(PmeError::Input(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(PmeError::Input(format!("c must be positive, got {}", self.c)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Config(String),
    Gap { unit: String, after_time: i64, next_time: i64 },
    TooShort { unit: String, len: usize, required: usize },
    NonFinite { unit: String, row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Non-fatal notes, e.g. units much shorter than the longest one.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_estimable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every reason the panel cannot be estimated under `config`.
pub fn validate(panel: &PanelDataset, config: &EstimationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Err(e) = config.check() {
        report.violations.push(Violation::Config(e.to_string()));
    }
    let t_max = panel.units().iter().map(UnitSeries::len).max().unwrap_or(0);
    for unit in panel.units() {
        let id = unit.unit_id().to_string();
        if let Some(k) = unit.first_gap() {
            report.violations.push(Violation::Gap {
                unit: id.clone(),
                after_time: unit.times()[k],
                next_time: unit.times()[k + 1],
            });
        }
        let q = config.q.for_length(unit.len());
        if unit.len() < 2 * q.max(2) {
            report.violations.push(Violation::TooShort {
                unit: id.clone(),
                len: unit.len(),
                required: 2 * q.max(2),
            });
        }
        if let Some(pos) = unit.values().iter().position(|v| !v.is_finite()) {
            // column-major storage
            let rows = unit.len();
            report.violations.push(Violation::NonFinite {
                unit: id.clone(),
                row: pos % rows,
                col: pos / rows,
            });
        }
        if let Some(frac) = config.min_relative_length {
            if (unit.len() as f64) < frac * t_max as f64 {
                report
                    .warnings
                    .push(format!("unit {id}: T_i = {} is below {frac} x max T_i = {t_max}", unit.len()));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, t: usize, m: usize) -> UnitSeries {
        UnitSeries::consecutive(id, 1, DMatrix::from_fn(t, m, |r, c| (r * m + c) as f64))
    }

    #[test]
    fn balanced_panel_is_estimable() {
        let panel = PanelDataset::from_units((0..3).map(|i| unit(&i.to_string(), 20, 2)).collect()).unwrap();
        let report = validate(&panel, &EstimationConfig::default());
        assert!(report.is_estimable(), "{report:?}");
    }

    #[test]
    fn gap_is_reported() {
        let u = UnitSeries::with_times("g", vec![1, 2, 4], DMatrix::zeros(3, 1)).unwrap();
        let panel = PanelDataset::from_units(vec![u]).unwrap();
        let cfg = EstimationConfig {
            q: SubsampleRule::Fixed(2),
            ..Default::default()
        };
        let report = validate(&panel, &cfg);
        assert!(report.violations.contains(&Violation::Gap {
            unit: "g".into(),
            after_time: 2,
            next_time: 4
        }));
    }

    #[test]
    fn short_unit_is_reported() {
        let panel = PanelDataset::from_units(vec![unit("a", 3, 2), unit("b", 10, 2)]).unwrap();
        let report = validate(&panel, &EstimationConfig::default());
        assert_eq!(
            report.violations,
            vec![Violation::TooShort {
                unit: "a".into(),
                len: 3,
                required: 4
            }]
        );
    }

    #[test]
    fn non_finite_is_reported_with_position() {
        let mut v = DMatrix::from_element(6, 2, 1.0);
        v[(4, 1)] = f64::NAN;
        let panel = PanelDataset::from_units(vec![UnitSeries::consecutive("x", 0, v)]).unwrap();
        let report = validate(&panel, &EstimationConfig::default());
        assert_eq!(
            report.violations,
            vec![Violation::NonFinite {
                unit: "x".into(),
                row: 4,
                col: 1
            }]
        );
    }

    #[test]
    fn validate_is_idempotent() {
        let panel = PanelDataset::from_units(vec![unit("a", 3, 2), unit("b", 10, 2)]).unwrap();
        let cfg = EstimationConfig::default();
        assert_eq!(validate(&panel, &cfg), validate(&panel, &cfg));
    }

    #[test]
    fn relative_length_warning() {
        let panel = PanelDataset::from_units(vec![unit("a", 10, 1), unit("b", 100, 1)]).unwrap();
        let cfg = EstimationConfig {
            min_relative_length: Some(0.2),
            ..Default::default()
        };
        let report = validate(&panel, &cfg);
        assert!(report.is_estimable());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn auto_rule() {
        assert_eq!(SubsampleRule::Auto.for_length(20), 2);
        assert_eq!(SubsampleRule::Auto.for_length(27), 3);
        assert_eq!(SubsampleRule::Auto.for_length(50), 3);
        assert_eq!(SubsampleRule::Auto.for_length(100), 4);
        assert_eq!(SubsampleRule::Auto.for_length(5), 2);
    }

    #[test]
    fn bad_config_is_reported() {
        let panel = PanelDataset::from_units(vec![unit("a", 10, 1)]).unwrap();
        let cfg = EstimationConfig {
            delta: 0.0,
            ..Default::default()
        };
        assert!(matches!(validate(&panel, &cfg).violations[0], Violation::Config(_)));
    }
}

//! Machine-readable run reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filter::{Exclusion, FilterCounts};
use crate::error::{PmeError, Result};
use crate::longrun::{Diagnostic, LongRunEstimate};
use crate::moments::SubsamplePlan;
use crate::panel::{PanelDataset, SubsampleRule, TimeAverage};
use crate::rank::RankSelection;
use crate::sim::ExperimentReport;

pub const REPORT_VERSION: &str = "pme-report/1";

/// Settings echoed back as they were applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub q: SubsampleRule,
    pub deltas: Vec<f64>,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_on: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_values: Option<Vec<Vec<f64>>>,
    pub scale_for_selection: bool,
    pub threshold_t: TimeAverage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub m: usize,
    pub t_ave: f64,
    pub t_ave_harmonic: f64,
    pub t_min: usize,
    pub t_max: usize,
    pub total_observations: usize,
    pub balanced: bool,
}

impl SampleSummary {
    pub fn new(panel: &PanelDataset, plan: &SubsamplePlan) -> Self {
        let lens = panel.lengths();
        SampleSummary {
            n: panel.n(),
            m: panel.m(),
            t_ave: plan.t_ave_arith,
            t_ave_harmonic: plan.t_ave_harm,
            t_min: lens.iter().copied().min().unwrap_or(0),
            t_max: lens.iter().copied().max().unwrap_or(0),
            total_observations: lens.iter().sum(),
            balanced: panel.is_balanced(),
        }
    }
}

/// Row-major nested vectors.
pub fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(PmeError::Input("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub r: usize,
    pub variables: Vec<String>,
    /// `m x r`, rows in variable order.
    pub b_hat: Vec<Vec<f64>>,
    /// Variables whose coefficients are free, in the row order of `theta`.
    pub free_variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_stats: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_values: Option<Vec<Vec<f64>>>,
    pub q_min: usize,
    pub q_max: usize,
    pub t_ave: f64,
}

impl EstimateReport {
    pub fn new(est: &LongRunEstimate, variables: &[String]) -> Self {
        EstimateReport {
            r: est.r,
            variables: variables.to_vec(),
            b_hat: matrix_rows(&est.b_hat),
            free_variables: est.theta_rows.iter().map(|&k| variables[k].clone()).collect(),
            theta: est.theta_hat.as_ref().map(matrix_rows),
            std_errors: est.std_errors.as_ref().map(matrix_rows),
            t_stats: est.t_stats.as_ref().map(matrix_rows),
            null_values: est.null_values.as_ref().map(matrix_rows),
            q_min: est.q_used.iter().copied().min().unwrap_or(0),
            q_max: est.q_used.iter().copied().max().unwrap_or(0),
            t_ave: est.t_ave,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionLog {
    pub counts: FilterCounts,
    pub units: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ConfigEcho,
    /// One entry per threshold exponent; empty for simulation runs.
    pub rank_selection: Vec<RankSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusions: Option<ExclusionLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentReport>,
}

impl RunReport {
    pub fn new(config: ConfigEcho) -> Self {
        RunReport {
            version: REPORT_VERSION.to_string(),
            config,
            rank_selection: Vec::new(),
            diagnostic: None,
            estimate: None,
            sample: None,
            exclusions: None,
            experiment: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| PmeError::Numerical(format!("serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(s).map_err(|e| PmeError::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        if r.version != REPORT_VERSION {
            return Err(PmeError::Input(format!("unsupported report version {:?}", r.version)));
        }
        Ok(r)
    }
}

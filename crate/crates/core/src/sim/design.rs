//! Monte Carlo design descriptions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PmeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Var1,
    Varma11,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    Gaussian,
    /// Chi-squared with 2 degrees of freedom, centred and scaled to unit variance.
    ChiSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    /// rho ~ U[0.1, 0.3]
    Moderate,
    /// rho ~ U[0.1, 0.2]
    Slow,
}

impl Speed {
    pub fn range(self) -> (f64, f64) {
        match self {
            Speed::Moderate => (0.1, 0.3),
            Speed::Slow => (0.1, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    Low,
    Moderate,
    High,
}

impl Persistence {
    pub fn range(self) -> (f64, f64) {
        match self {
            Persistence::Low => (0.0, 0.8),
            Persistence::Moderate => (0.7, 0.9),
            Persistence::High => (0.8, 0.95),
        }
    }
}

/// Variance term used when solving for the loading scale with two relations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingRule {
    /// Diagonal `1 / (1 - rho_i rho_j)`. The realized fit overshoots the target.
    #[default]
    Published,
    /// Exact stationary variance, `1 / (1 - (1 - rho_i)(1 - rho_j))`.
    Stationary,
}

/// Settings for calibrating the loading scale by pilot simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KappaPilot {
    pub reps: usize,
    pub n: usize,
    pub t: usize,
}

impl Default for KappaPilot {
    fn default() -> Self {
        KappaPilot {
            reps: 200,
            n: 500,
            t: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecmDesign {
    pub r0: usize,
    pub model: Model,
    pub error_dist: ErrorDist,
    pub speed: Speed,
    pub pr2: f64,
    #[serde(default)]
    pub factors: bool,
    #[serde(default)]
    pub pilot: KappaPilot,
    #[serde(default)]
    pub loading_rule: LoadingRule,
}

impl VecmDesign {
    pub fn var1(r0: usize) -> Self {
        VecmDesign {
            r0,
            model: Model::Var1,
            error_dist: ErrorDist::Gaussian,
            speed: Speed::Moderate,
            pr2: 0.2,
            factors: false,
            pilot: KappaPilot::default(),
            loading_rule: LoadingRule::default(),
        }
    }

    pub fn b0(&self) -> DMatrix<f64> {
        match self.r0 {
            1 => DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]),
            _ => DMatrix::from_column_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDiffDesign {
    pub persistence: Persistence,
    #[serde(default)]
    pub factors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Design {
    /// Three-variable error-correction model with one or two relations.
    Vecm(VecmDesign),
    /// Three-variable VAR(1) in first differences; no relations.
    VarDiff(VarDiffDesign),
    /// Two-variable design with one-way long-run causality.
    Pb,
}

impl Design {
    pub fn m(&self) -> usize {
        match self {
            Design::Vecm(_) | Design::VarDiff(_) => 3,
            Design::Pb => 2,
        }
    }

    pub fn true_rank(&self) -> usize {
        match self {
            Design::Vecm(v) => v.r0,
            Design::VarDiff(_) => 0,
            Design::Pb => 1,
        }
    }

    /// True `Theta` under the leading-variable normalization.
    pub fn true_theta(&self) -> Option<DMatrix<f64>> {
        match self {
            Design::Vecm(v) if v.r0 == 1 => Some(DMatrix::from_column_slice(2, 1, &[0.0, -1.0])),
            Design::Vecm(_) => Some(DMatrix::from_row_slice(1, 2, &[-1.0, -1.0])),
            Design::VarDiff(_) => None,
            Design::Pb => Some(DMatrix::from_element(1, 1, -1.0)),
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Design::Vecm(v) = self {
            if !(v.r0 == 1 || v.r0 == 2) {
                return Err(PmeError::Design(format!("r0 must be 1 or 2, got {}", v.r0)));
            }
            if !(v.pr2 > 0.0 && v.pr2 < 1.0) {
                return Err(PmeError::Design(format!("pr2 must lie in (0, 1), got {}", v.pr2)));
            }
            if v.model == Model::Varma11 && (v.pilot.reps == 0 || v.pilot.n == 0 || v.pilot.t < 2) {
                return Err(PmeError::Design("pilot needs reps >= 1, n >= 1, t >= 2".into()));
            }
        }
        Ok(())
    }
}

//! Eigenvalue thresholding for the number of long-run relations.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    /// Ascending eigenvalues of the correlation matrix.
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
    pub r_tilde: usize,
    pub delta: f64,
    pub c: f64,
    pub t_ave: f64,
}

/// Counts eigenvalues strictly below `c * t_ave^(-delta)`.
pub fn select_rank(eigs: &DVector<f64>, t_ave: f64, delta: f64, c: f64) -> RankSelection {
    let threshold = c * t_ave.powf(-delta);
    let r_tilde = eigs.iter().filter(|&&l| l < threshold).count();
    RankSelection {
        eigenvalues: eigs.iter().copied().collect(),
        threshold,
        r_tilde,
        delta,
        c,
        t_ave,
    }
}

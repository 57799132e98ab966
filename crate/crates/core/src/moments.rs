//! Sub-sample time averages and the pooled covariance of their deviations.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{PmeError, Result};
use crate::panel::{PanelDataset, SubsampleRule, TimeAverage, UnitSeries};

/// Splits `0..t_i` into `q` contiguous blocks; the first `t_i mod q` blocks are one longer.
///
/// Ranges are zero-based and half-open.
pub fn partition(t_i: usize, q: usize) -> Result<Vec<Range<usize>>> {
    if q < 1 || t_i < 2 * q {
        return Err(PmeError::TooShort {
            unit: String::new(),
            len: t_i,
            q,
        });
    }
    let base = t_i / q;
    let extra = t_i % q;
    let mut blocks = Vec::with_capacity(q);
    let mut start = 0;
    for l in 0..q {
        let len = base + usize::from(l < extra);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(blocks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitPlan {
    pub len: usize,
    pub q: usize,
    pub blocks: Vec<Range<usize>>,
    /// `T_ave_harm / T_i`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsamplePlan {
    pub units: Vec<UnitPlan>,
    pub t_ave_arith: f64,
    pub t_ave_harm: f64,
}

impl SubsamplePlan {
    pub fn new(panel: &PanelDataset, rule: SubsampleRule) -> Result<Self> {
        let lengths = panel.lengths();
        let n = lengths.len() as f64;
        let t_ave_arith = lengths.iter().map(|&t| t as f64).sum::<f64>() / n;
        let t_ave_harm = n / lengths.iter().map(|&t| 1.0 / t as f64).sum::<f64>();
        let units = panel
            .units()
            .iter()
            .map(|u| {
                let q = rule.for_length(u.len());
                let blocks = partition(u.len(), q).map_err(|e| match e {
                    PmeError::TooShort { len, q, .. } => PmeError::TooShort {
                        unit: u.unit_id().to_string(),
                        len,
                        q,
                    },
                    other => other,
                })?;
                Ok(UnitPlan {
                    len: u.len(),
                    q,
                    blocks,
                    phi: t_ave_harm / u.len() as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SubsamplePlan {
            units,
            t_ave_arith,
            t_ave_harm,
        })
    }

    pub fn t_ave(&self, kind: TimeAverage) -> f64 {
        match kind {
            TimeAverage::Arithmetic => self.t_ave_arith,
            TimeAverage::Harmonic => self.t_ave_harm,
        }
    }

    /// `q` if every unit uses the same count.
    pub fn common_q(&self) -> Option<usize> {
        let q0 = self.units.first()?.q;
        self.units.iter().all(|u| u.q == q0).then_some(q0)
    }
}

/// Block means minus the block-length-weighted grand mean, one row per block.
pub fn subsample_deviations(series: &UnitSeries, blocks: &[Range<usize>]) -> DMatrix<f64> {
    let x = series.values();
    let m = x.ncols();
    let mut means = DMatrix::zeros(blocks.len(), m);
    let mut grand = DVector::zeros(m);
    let mut total = 0usize;
    for (l, b) in blocks.iter().enumerate() {
        for k in 0..m {
            let s: f64 = (b.start..b.end).map(|t| x[(t, k)]).sum();
            means[(l, k)] = s / b.len() as f64;
            grand[k] += s;
        }
        total += b.len();
    }
    grand /= total as f64;
    for mut row in means.row_iter_mut() {
        row -= grand.transpose();
    }
    means
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleMoments {
    /// Per unit, `q_i x m` deviations.
    pub deviations: Vec<DMatrix<f64>>,
    /// Per-unit `T_i^{-1} q_i^{-1} sum_l d d'`.
    pub q_units: Vec<DMatrix<f64>>,
    /// Pooled `Q`, the mean of `q_units`.
    pub q: DMatrix<f64>,
    pub plan: SubsamplePlan,
}

impl SubsampleMoments {
    pub fn m(&self) -> usize {
        self.q.nrows()
    }
}

pub fn pooled_covariance(panel: &PanelDataset, plan: &SubsamplePlan) -> Result<SubsampleMoments> {
    if plan.units.len() != panel.n() {
        return Err(PmeError::Input(format!(
            "plan covers {} units, panel has {}",
            plan.units.len(),
            panel.n()
        )));
    }
    let m = panel.m();
    let mut deviations = Vec::with_capacity(panel.n());
    let mut q_units = Vec::with_capacity(panel.n());
    let mut q = DMatrix::zeros(m, m);
    for (unit, up) in panel.units().iter().zip(&plan.units) {
        let d = subsample_deviations(unit, &up.blocks);
        let qi = d.transpose() * &d / (up.len as f64 * up.q as f64);
        q += &qi;
        deviations.push(d);
        q_units.push(qi);
    }
    q /= panel.n() as f64;
    Ok(SubsampleMoments {
        deviations,
        q_units,
        q,
        plan: plan.clone(),
    })
}

/// Divides every variable by the pooled standard deviation of its within-unit demeaned first differences.
///
/// Returns the scaled panel and the `m` factors.
pub fn scale_by_diff_sd(panel: &PanelDataset) -> Result<(PanelDataset, DVector<f64>)> {
    let m = panel.m();
    let mut ss = DVector::<f64>::zeros(m);
    let mut dof = 0usize;
    for u in panel.units() {
        let t = u.len();
        if t < 3 {
            return Err(PmeError::Input(format!(
                "unit {}: scaling needs at least 3 observations, got {t}",
                u.unit_id()
            )));
        }
        let x = u.values();
        for k in 0..m {
            let diffs: Vec<f64> = (1..t).map(|s| x[(s, k)] - x[(s - 1, k)]).collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            ss[k] += diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>();
        }
        dof += t - 2;
    }
    let sd = ss.map(|s| (s / dof as f64).sqrt());
    if let Some(k) = sd.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(PmeError::degenerate(
            "variable",
            format!("{} has zero first-difference variation", panel.variable_names()[k]),
        ));
    }
    let inv = sd.map(|s| 1.0 / s);
    let units = panel
        .units()
        .iter()
        .map(|u| {
            let mut v = u.values().clone();
            for (k, mut col) in v.column_iter_mut().enumerate() {
                col *= inv[k];
            }
            u.map_values(v)
        })
        .collect();
    Ok((panel.with_units(units), sd))
}

/// `D^{-1/2} Q D^{-1/2}` with `D = diag(Q)`.
pub fn correlation_from_covariance(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = q.diagonal();
    if let Some(k) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(PmeError::degenerate(
            "covariance",
            format!("diagonal entry {k} is {}", d[k]),
        ));
    }
    let s = d.map(|v| 1.0 / v.sqrt());
    let mut r = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * s[i] * s[j]);
    for i in 0..r.nrows() {
        r[(i, i)] = 1.0;
    }
    Ok(r)
}

//! Eigenvector basis, exact identification, plug-in covariance and the estimation pipeline.

use nalgebra::{DMatrix, DVector};

use crate::eigen::symmetric_eigen;
use crate::error::{PmeError, Result};
use crate::moments::{
    correlation_from_covariance, pooled_covariance, scale_by_diff_sd, SubsampleMoments, SubsamplePlan,
};
use crate::panel::{EstimationConfig, PanelDataset};
use crate::rank::{select_rank, RankSelection};

pub const MAX_CONDITION: f64 = 1e12;
/// Two-sided 5% normal critical value.
pub const CRITICAL_5PCT: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub enum IdentificationScheme {
    /// `B = (I_r, Theta')'`: the first `r` variables carry the normalization.
    Normalized,
    /// Normalize relation `j` on variable `vars[j]` (zero-based positions).
    NormalizedOn(Vec<usize>),
    /// `R B = A` with `R: r x m` and `A: r x r`. No standard errors are produced.
    General { r_mat: DMatrix<f64>, a_mat: DMatrix<f64> },
}

impl IdentificationScheme {
    /// Number of relations the scheme pins down, if it fixes one.
    pub fn implied_rank(&self) -> Option<usize> {
        match self {
            IdentificationScheme::Normalized => None,
            IdentificationScheme::NormalizedOn(v) => Some(v.len()),
            IdentificationScheme::General { r_mat, .. } => Some(r_mat.nrows()),
        }
    }

    /// Variables carrying the unit normalization, in relation order.
    pub fn normalized_positions(&self, r: usize) -> Option<Vec<usize>> {
        match self {
            IdentificationScheme::Normalized => Some((0..r).collect()),
            IdentificationScheme::NormalizedOn(v) => Some(v.clone()),
            IdentificationScheme::General { .. } => None,
        }
    }

    pub fn restrictions(&self, m: usize, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if r == 0 || r >= m {
            return Err(PmeError::Input(format!("need 1 <= r <= m-1, got r={r}, m={m}")));
        }
        match self {
            IdentificationScheme::General { r_mat, a_mat } => {
                if r_mat.shape() != (r, m) || a_mat.shape() != (r, r) {
                    return Err(PmeError::Identification(format!(
                        "R is {:?} and A is {:?}, expected ({r}, {m}) and ({r}, {r})",
                        r_mat.shape(),
                        a_mat.shape()
                    )));
                }
                Ok((r_mat.clone(), a_mat.clone()))
            }
            _ => {
                let pos = self.normalized_positions(r).unwrap_or_default();
                if pos.len() != r {
                    return Err(PmeError::Identification(format!(
                        "{} normalizing variables for {r} relations",
                        pos.len()
                    )));
                }
                let mut seen = vec![false; m];
                for &p in &pos {
                    if p >= m || seen[p] {
                        return Err(PmeError::Identification(format!(
                            "normalizing positions {pos:?} must be distinct and below {m}"
                        )));
                    }
                    seen[p] = true;
                }
                let mut r_mat = DMatrix::zeros(r, m);
                for (j, &p) in pos.iter().enumerate() {
                    r_mat[(j, p)] = 1.0;
                }
                Ok((r_mat, DMatrix::identity(r, r)))
            }
        }
    }
}

/// Orthonormal eigenvectors of `Q` for its `r` smallest eigenvalues.
pub fn pme_basis(moments: &SubsampleMoments, r: usize) -> Result<DMatrix<f64>> {
    let m = moments.m();
    if r == 0 || r >= m {
        return Err(PmeError::Input(format!("need 1 <= r <= m-1, got r={r}, m={m}")));
    }
    let eig = symmetric_eigen(&moments.q)?;
    Ok(eig.vectors.columns(0, r).into_owned())
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `B (R B)^{-1} A`.
pub fn exact_identify(b_hat: &DMatrix<f64>, scheme: &IdentificationScheme) -> Result<DMatrix<f64>> {
    let (m, r) = b_hat.shape();
    let (r_mat, a_mat) = scheme.restrictions(m, r)?;
    let rb = &r_mat * b_hat;
    let cond = condition_number(&rb);
    if !(cond <= MAX_CONDITION) {
        return Err(PmeError::Identification(format!(
            "R B has condition number {cond:e}"
        )));
    }
    let x = rb
        .lu()
        .solve(&a_mat)
        .ok_or_else(|| PmeError::Identification("R B is singular".into()))?;
    let mut b = b_hat * x;
    if let Some(pos) = scheme.normalized_positions(r) {
        for (j, &p) in pos.iter().enumerate() {
            for k in 0..r {
                b[(p, k)] = if k == j { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceComponents {
    pub omega_hat: DMatrix<f64>,
    pub omega_22: DMatrix<f64>,
    pub q22: DMatrix<f64>,
    /// Per unit, `q_i x r` error corrections (row `l` is `E_il'`).
    pub error_corrections: Vec<DMatrix<f64>>,
    pub var_vec_theta: DMatrix<f64>,
}

/// Plug-in covariance of `vec(Theta)` for `b_ring = (I_r, Theta')'`.
///
/// `moments` must be in the same variable order as `b_ring`. The per-unit
/// weight `phi_i^2 / q_i^2` and the `1/(n T_ave^2)` prefactor share the
/// harmonic `T_ave`, so the product is `1/(T_i q_i)^2`.
pub fn estimate_covariance(moments: &SubsampleMoments, b_ring: &DMatrix<f64>) -> Result<CovarianceComponents> {
    let (m, r) = b_ring.shape();
    if r == 0 || r >= m || moments.m() != m {
        return Err(PmeError::Input(format!(
            "basis is {m}x{r} but moments have m={}",
            moments.m()
        )));
    }
    let plan = &moments.plan;
    let n = plan.units.len() as f64;
    let t_ave = plan.t_ave_harm;
    let mr = m * r;
    let mut omega = DMatrix::zeros(mr, mr);
    let mut ecs = Vec::with_capacity(plan.units.len());
    for (d, up) in moments.deviations.iter().zip(&plan.units) {
        let e = d * b_ring;
        let mut z = DVector::zeros(mr);
        for l in 0..d.nrows() {
            for j in 0..r {
                for k in 0..m {
                    z[j * m + k] += e[(l, j)] * d[(l, k)];
                }
            }
        }
        let w = (up.phi / up.q as f64).powi(2);
        omega.ger(w, &z, &z, 1.0);
        ecs.push(e);
    }
    omega /= n;

    let p = m - r;
    let idx: Vec<usize> = (0..r).flat_map(|j| (r..m).map(move |k| j * m + k)).collect();
    let omega_22 = omega.select_rows(&idx).select_columns(&idx);
    let q22 = moments.q.view((r, r), (p, p)).into_owned();
    let q22_inv = q22
        .clone()
        .try_inverse()
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| PmeError::degenerate("variance", "Q22 is singular"))?;
    let mut kron = DMatrix::zeros(p * r, p * r);
    for j in 0..r {
        kron.view_mut((j * p, j * p), (p, p)).copy_from(&q22_inv);
    }
    let mut var = &kron * &omega_22 * &kron / (n * t_ave * t_ave);
    var = (&var + var.transpose()) * 0.5;
    Ok(CovarianceComponents {
        omega_hat: omega,
        omega_22,
        q22,
        error_corrections: ecs,
        var_vec_theta: var,
    })
}

pub fn t_statistics(theta: &DMatrix<f64>, se: &DMatrix<f64>, nulls: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if theta.shape() != se.shape() || theta.shape() != nulls.shape() {
        return Err(PmeError::Input(format!(
            "shape mismatch: theta {:?}, se {:?}, nulls {:?}",
            theta.shape(),
            se.shape(),
            nulls.shape()
        )));
    }
    if se.iter().any(|&s| !(s > 0.0)) {
        return Err(PmeError::degenerate("standard error", "zero or non-finite standard error"));
    }
    Ok((theta - nulls).component_div(se))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRunEstimate {
    pub r: usize,
    /// Identified `m x r` matrix in the original variable order.
    pub b_hat: DMatrix<f64>,
    /// Variable positions of the rows of `theta_hat`.
    pub theta_rows: Vec<usize>,
    pub theta_hat: Option<DMatrix<f64>>,
    pub var_vec_theta: Option<DMatrix<f64>>,
    pub std_errors: Option<DMatrix<f64>>,
    pub t_stats: Option<DMatrix<f64>>,
    pub null_values: Option<DMatrix<f64>>,
    pub q_used: Vec<usize>,
    pub n: usize,
    pub t_ave: f64,
}

/// Reorders variables so that `first` come first, the rest keep their order.
fn permutation(m: usize, first: &[usize]) -> Vec<usize> {
    let mut perm = first.to_vec();
    perm.extend((0..m).filter(|k| !first.contains(k)));
    perm
}

fn permute_moments(moments: &SubsampleMoments, perm: &[usize]) -> SubsampleMoments {
    SubsampleMoments {
        deviations: moments.deviations.iter().map(|d| d.select_columns(perm)).collect(),
        q_units: moments
            .q_units
            .iter()
            .map(|q| q.select_rows(perm).select_columns(perm))
            .collect(),
        q: moments.q.select_rows(perm).select_columns(perm),
        plan: moments.plan.clone(),
    }
}

/// Estimates `r` relations from unscaled moments.
pub fn fit(
    moments: &SubsampleMoments,
    r: usize,
    scheme: &IdentificationScheme,
    null_values: Option<&DMatrix<f64>>,
) -> Result<LongRunEstimate> {
    let m = moments.m();
    let basis = pme_basis(moments, r)?;
    let b_ring = exact_identify(&basis, scheme)?;
    let plan = &moments.plan;
    let mut out = LongRunEstimate {
        r,
        b_hat: b_ring.clone(),
        theta_rows: Vec::new(),
        theta_hat: None,
        var_vec_theta: None,
        std_errors: None,
        t_stats: None,
        null_values: None,
        q_used: plan.units.iter().map(|u| u.q).collect(),
        n: plan.units.len(),
        t_ave: plan.t_ave_harm,
    };
    let Some(pos) = scheme.normalized_positions(r) else {
        return Ok(out);
    };
    let perm = permutation(m, &pos);
    let rows = perm[r..].to_vec();
    let pm = permute_moments(moments, &perm);
    let pb = b_ring.select_rows(&perm);
    let theta = pb.rows(r, m - r).into_owned();
    let cov = estimate_covariance(&pm, &pb)?;
    let se = DMatrix::from_iterator(
        m - r,
        r,
        cov.var_vec_theta.diagonal().iter().map(|v| v.max(0.0).sqrt()),
    );
    let nulls = match null_values {
        Some(n) => n.clone(),
        None => DMatrix::zeros(m - r, r),
    };
    out.t_stats = Some(t_statistics(&theta, &se, &nulls)?);
    out.theta_rows = rows;
    out.theta_hat = Some(theta);
    out.var_vec_theta = Some(cov.var_vec_theta);
    out.std_errors = Some(se);
    out.null_values = Some(nulls);
    Ok(out)
}

/// Ascending eigenvalues of the correlation form of `Q`, optionally after diff-sd scaling.
pub fn correlation_eigenvalues(panel: &PanelDataset, config: &EstimationConfig) -> Result<DVector<f64>> {
    let scaled;
    let data = if config.scale_for_selection {
        scaled = scale_by_diff_sd(panel)?.0;
        &scaled
    } else {
        panel
    };
    let plan = SubsamplePlan::new(data, config.q)?;
    let moments = pooled_covariance(data, &plan)?;
    let r = correlation_from_covariance(&moments.q)?;
    Ok(symmetric_eigen(&r)?.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// No eigenvalue fell below the threshold.
    NoRelations,
    /// Every eigenvalue fell below the threshold.
    AllBelowThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOutcome {
    /// Absent when the rank was fixed by the configuration.
    pub selection: Option<RankSelection>,
    pub estimate: Option<LongRunEstimate>,
    pub diagnostic: Option<Diagnostic>,
}

pub fn estimate(panel: &PanelDataset, config: &EstimationConfig) -> Result<EstimationOutcome> {
    config.check()?;
    let m = panel.m();
    let plan = SubsamplePlan::new(panel, config.q)?;
    let (selection, r) = match config.rank {
        Some(r) => (None, r),
        None => {
            let eigs = correlation_eigenvalues(panel, config)?;
            let sel = select_rank(&eigs, plan.t_ave(config.threshold_t), config.delta, config.c);
            let r = sel.r_tilde;
            (Some(sel), r)
        }
    };
    let diagnostic = match r {
        0 => Some(Diagnostic::NoRelations),
        r if r >= m => Some(Diagnostic::AllBelowThreshold),
        _ => None,
    };
    if config.rank.is_some() && diagnostic.is_some() {
        return Err(PmeError::Input(format!("rank must satisfy 1 <= r <= m-1 = {}, got {r}", m - 1)));
    }
    if diagnostic.is_some() {
        return Ok(EstimationOutcome {
            selection,
            estimate: None,
            diagnostic,
        });
    }
    if let Some(k) = config.identification.implied_rank() {
        if k != r {
            return Err(PmeError::Identification(format!(
                "identification restricts {k} relations but r = {r}"
            )));
        }
    }
    let moments = pooled_covariance(panel, &plan)?;
    let est = fit(&moments, r, &config.identification, config.null_values.as_ref())?;
    Ok(EstimationOutcome {
        selection,
        estimate: Some(est),
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::partition;
    use crate::panel::{SubsampleRule, UnitSeries};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn moments_from_q(q: DMatrix<f64>) -> SubsampleMoments {
        SubsampleMoments {
            deviations: Vec::new(),
            q_units: Vec::new(),
            q,
            plan: SubsamplePlan {
                units: Vec::new(),
                t_ave_arith: 1.0,
                t_ave_harm: 1.0,
            },
        }
    }

    #[test]
    fn basis_examples() {
        let b = pme_basis(&moments_from_q(DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 5.0]))), 1).unwrap();
        assert_eq!(b.as_slice(), &[1.0, 0.0]);
        let b = pme_basis(
            &moments_from_q(DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02, 5.0]))),
            2,
        )
        .unwrap();
        assert_eq!(b.row(2).amax(), 0.0);
        assert!(pme_basis(&moments_from_q(DMatrix::identity(2, 2)), 2).is_err());
    }

    #[test]
    fn identify_examples() {
        let b = DMatrix::from_column_slice(2, 1, &[0.6, -0.8]);
        let br = exact_identify(&b, &IdentificationScheme::Normalized).unwrap();
        assert_eq!(br[0], 1.0);
        assert_relative_eq!(br[1], -4.0 / 3.0, epsilon = 1e-15);

        let fixed = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, -2.0]);
        assert_eq!(exact_identify(&fixed, &IdentificationScheme::Normalized).unwrap(), fixed);

        let on2 = exact_identify(&b, &IdentificationScheme::NormalizedOn(vec![1])).unwrap();
        assert_relative_eq!(br[1] * on2[0], 1.0, epsilon = 1e-12);

        let zero_top = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            exact_identify(&zero_top, &IdentificationScheme::Normalized),
            Err(PmeError::Identification(_))
        ));
    }

    #[test]
    fn general_scheme_satisfies_restrictions() {
        let b = DMatrix::from_column_slice(3, 1, &[0.3, 0.5, -0.2]);
        let scheme = IdentificationScheme::General {
            r_mat: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
            a_mat: DMatrix::from_element(1, 1, 2.0),
        };
        let br = exact_identify(&b, &scheme).unwrap();
        assert_relative_eq!(br[0] + br[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn t_stat_examples() {
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        let t = t_statistics(&one(-1.142), &one(0.010), &one(-1.0)).unwrap();
        assert_relative_eq!(t[0], -14.2, epsilon = 1e-9);
        assert_eq!(t_statistics(&one(0.3), &one(0.1), &one(0.3)).unwrap()[0], 0.0);
        assert!(t_statistics(&one(0.3), &one(0.0), &one(0.0)).is_err());
    }

    fn toy_panel() -> PanelDataset {
        // unit 0: deviations (-1, -2), (1, 2) + noise; unit 1 shorter
        let u0 = DMatrix::from_row_slice(4, 2, &[0.0, 0.1, -2.0, -4.3, 2.0, 3.9, 0.0, 0.3]);
        let u1 = DMatrix::from_row_slice(5, 2, &[1.0, 2.2, 0.0, -0.1, 1.5, 3.0, 3.0, 5.8, 2.0, 4.5]);
        PanelDataset::from_units(vec![
            UnitSeries::consecutive("a", 0, u0),
            UnitSeries::consecutive("b", 0, u1),
        ])
        .unwrap()
    }

    /// Literal evaluation: sum over (i, l, l') of (E_il kron I) d_il d_il'' (E_il' kron I)'.
    fn literal_variance(panel: &PanelDataset, b: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
        let m = panel.m();
        let r = b.ncols();
        let n = panel.n() as f64;
        let lengths = panel.lengths();
        let t_harm = n / lengths.iter().map(|&t| 1.0 / t as f64).sum::<f64>();
        let mut omega = DMatrix::zeros(m * r, m * r);
        let mut qbar = DMatrix::zeros(m, m);
        for u in panel.units() {
            let t = u.len();
            let blocks = partition(t, q).unwrap();
            let x = u.values();
            let grand = DVector::from_fn(m, |k, _| (0..t).map(|s| x[(s, k)]).sum::<f64>() / t as f64);
            let ds: Vec<DVector<f64>> = blocks
                .iter()
                .map(|bl| {
                    DVector::from_fn(m, |k, _| bl.clone().map(|s| x[(s, k)]).sum::<f64>() / bl.len() as f64)
                        - &grand
                })
                .collect();
            let phi = t_harm / t as f64;
            let w = phi * phi / (q * q) as f64;
            for dl in &ds {
                qbar += dl * dl.transpose() / (t * q) as f64 / n;
                for dl2 in &ds {
                    let el = b.transpose() * dl;
                    let el2 = b.transpose() * dl2;
                    let kl = el.kronecker(&DMatrix::<f64>::identity(m, m));
                    let kl2 = el2.kronecker(&DMatrix::<f64>::identity(m, m));
                    omega += (kl * dl * dl2.transpose() * kl2.transpose()) * (w / n);
                }
            }
        }
        let p = m - r;
        let idx: Vec<usize> = (0..r).flat_map(|j| (r..m).map(move |k| j * m + k)).collect();
        let o22 = omega.select_rows(&idx).select_columns(&idx);
        let q22i = qbar.view((r, r), (p, p)).into_owned().try_inverse().unwrap();
        let kron = DMatrix::<f64>::identity(r, r).kronecker(&q22i);
        &kron * o22 * &kron / (n * t_harm * t_harm)
    }

    #[test]
    fn covariance_matches_literal_summation() {
        let panel = toy_panel();
        let plan = SubsamplePlan::new(&panel, SubsampleRule::Fixed(2)).unwrap();
        let mom = pooled_covariance(&panel, &plan).unwrap();
        let b = DMatrix::from_column_slice(2, 1, &[1.0, -0.5]);
        let cov = estimate_covariance(&mom, &b).unwrap();
        let oracle = literal_variance(&panel, &b, 2);
        assert_relative_eq!(cov.var_vec_theta, oracle, max_relative = 1e-12, epsilon = 1e-15);
        let e = &cov.omega_hat;
        assert!((e - e.transpose()).amax() <= 1e-12 * e.amax());
    }

    #[test]
    fn zero_deviations_give_zero_omega() {
        let unit = DMatrix::from_element(6, 2, 3.0);
        let panel = PanelDataset::from_units(vec![UnitSeries::consecutive("a", 0, unit)]).unwrap();
        let plan = SubsamplePlan::new(&panel, SubsampleRule::Fixed(2)).unwrap();
        let mut mom = pooled_covariance(&panel, &plan).unwrap();
        mom.q = DMatrix::identity(2, 2);
        let cov = estimate_covariance(&mom, &DMatrix::from_column_slice(2, 1, &[1.0, 0.2])).unwrap();
        assert_eq!(cov.omega_hat.amax(), 0.0);
        assert_eq!(cov.var_vec_theta.amax(), 0.0);
    }

    #[test]
    fn fixed_rank_override() {
        let cfg = EstimationConfig {
            rank: Some(1),
            ..Default::default()
        };
        let out = estimate(&toy_panel(), &cfg).unwrap();
        assert!(out.selection.is_none());
        let est = out.estimate.unwrap();
        assert_eq!(est.r, 1);
        assert_eq!(est.b_hat[0], 1.0);
        assert!(est.std_errors.unwrap()[0] > 0.0);

        let bad = EstimationConfig {
            rank: Some(2),
            ..Default::default()
        };
        assert!(estimate(&toy_panel(), &bad).is_err());
    }

    #[test]
    fn normalize_on_permutes_consistently() {
        let panel = toy_panel();
        let plan = SubsamplePlan::new(&panel, SubsampleRule::Fixed(2)).unwrap();
        let mom = pooled_covariance(&panel, &plan).unwrap();
        let a = fit(&mom, 1, &IdentificationScheme::Normalized, None).unwrap();
        let b = fit(&mom, 1, &IdentificationScheme::NormalizedOn(vec![1]), None).unwrap();
        assert_eq!(b.theta_rows, vec![0]);
        let ta = a.theta_hat.unwrap()[0];
        let tb = b.theta_hat.unwrap()[0];
        assert_relative_eq!(ta * tb, 1.0, epsilon = 1e-10);
        // delta method: se(1/theta) = se(theta) / theta^2
        let sa = a.std_errors.unwrap()[0];
        let sb = b.std_errors.unwrap()[0];
        assert!(sa > 0.0 && sb > 0.0);
    }

    fn psd(entries: &[f64], m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |i, j| entries[i * 6 + j]);
        &a * a.transpose() + DMatrix::identity(m, m) * 1e-3
    }

    proptest! {
        #[test]
        fn identification_depends_only_on_span(
            m in 2usize..6,
            entries in prop::collection::vec(-3.0f64..3.0, 36),
            h in prop::collection::vec(-2.0f64..2.0, 25),
            r_seed in 0usize..5,
        ) {
            let r = 1 + r_seed % (m - 1);
            let q = psd(&entries, m);
            let b = pme_basis(&moments_from_q(q.clone()), r).unwrap();
            let hm = DMatrix::from_fn(r, r, |i, j| h[i * 5 + j]) + DMatrix::identity(r, r) * 3.0;
            prop_assume!(condition_number(&hm) < 1e4);
            let Ok(b1) = exact_identify(&b, &IdentificationScheme::Normalized) else {
                return Ok(());
            };
            prop_assume!(condition_number(&b.rows(0, r).into_owned()) < 1e6);
            let b2 = exact_identify(&(&b * &hm), &IdentificationScheme::Normalized).unwrap();
            prop_assert!((&b1 - &b2).amax() <= 1e-9 * (1.0 + b1.amax()));

            // eigen residual bound
            let eig = symmetric_eigen(&q).unwrap();
            let bound = eig.values.rows(0, r).norm();
            prop_assert!((&q * &b).norm() <= bound + 1e-9);
            prop_assert!((b.transpose() * &b - DMatrix::identity(r, r)).amax() <= 1e-10);
        }
    }
}

//! Loading scale `kappa` that delivers a target pooled fit.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};
use rayon::prelude::*;

use super::design::{LoadingRule, Model, VecmDesign};
use super::dgp::{draw_vecm_params, vecm_paths, vecm_pi, StreamKey};
use crate::error::{PmeError, Result};

const BISECTION_TOL: f64 = 1e-10;
const KAPPA_MAX: f64 = 10.0;

/// Per-unit draws that enter the fit identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingDraw {
    pub v: Matrix3<f64>,
    /// `rho_11` and, for two relations, `rho_22`.
    pub rho: [f64; 2],
}

/// `A_i` for one relation: `a_21 = 0`, `a_11 = a_31 + rho`, `|A_i|^2 = kappa^2`.
pub fn build_loadings_r1(rho: f64, kappa: f64) -> Result<Vector3<f64>> {
    let disc = 2.0 * kappa * kappa - rho * rho;
    if disc < 0.0 {
        return Err(PmeError::Design(format!(
            "kappa^2 = {} is below rho^2/2 = {}",
            kappa * kappa,
            rho * rho / 2.0
        )));
    }
    let a31 = (-rho + disc.sqrt()) / 2.0;
    Ok(Vector3::new(a31 + rho, 0.0, a31))
}

/// `A_i` for two relations with `a_31 = a_32 = kappa`.
pub fn build_loadings_r2(rho11: f64, rho22: f64, kappa: f64) -> Matrix3x2<f64> {
    Matrix3x2::new(kappa + rho11, kappa, kappa, kappa + rho22, kappa, kappa)
}

fn b0_r2() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 1.0, -1.0, -1.0)
}

/// `tr(A Omega A')` with `Omega` the variance of the relations under `rule`.
fn explained(r0: usize, d: &LoadingDraw, kappa: f64, rule: LoadingRule) -> Result<f64> {
    match r0 {
        1 => {
            let b = Vector3::new(1.0, 0.0, -1.0);
            let omega = (b.transpose() * d.v * b)[0] / (1.0 - (1.0 - d.rho[0]).powi(2));
            let a = build_loadings_r1(d.rho[0], kappa)?;
            Ok(a.norm_squared() * omega)
        }
        2 => {
            let b = b0_r2();
            let bvb: Matrix2<f64> = b.transpose() * d.v * b;
            let q = match rule {
                LoadingRule::Published => d.rho,
                LoadingRule::Stationary => [1.0 - d.rho[0], 1.0 - d.rho[1]],
            };
            let a = build_loadings_r2(d.rho[0], d.rho[1], kappa);
            let ata = a.transpose() * a;
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += ata[(i, j)] * bvb[(i, j)] / (1.0 - q[i] * q[j]);
                }
            }
            Ok(s)
        }
        _ => Err(PmeError::Design(format!("r0 must be 1 or 2, got {r0}"))),
    }
}

/// Population pooled fit implied by `kappa` for VAR(1) error-correction designs.
pub fn implied_pr2(r0: usize, draws: &[LoadingDraw], kappa: f64, rule: LoadingRule) -> Result<f64> {
    let mut num = 0.0;
    let mut tr = 0.0;
    for d in draws {
        num += explained(r0, d, kappa, rule)?;
        tr += d.v.trace();
    }
    Ok(num / (num + tr))
}

/// Closed form for one relation, bisection on `(0, 10]` for two.
///
/// `rule` only matters for two relations; with one the stationary variance is used.
pub fn solve_kappa_var1(r0: usize, draws: &[LoadingDraw], pr2: f64, rule: LoadingRule) -> Result<f64> {
    if !(pr2 > 0.0 && pr2 < 1.0) {
        return Err(PmeError::Design(format!("pr2 must lie in (0, 1), got {pr2}")));
    }
    if draws.is_empty() {
        return Err(PmeError::Design("no units".into()));
    }
    let tr: f64 = draws.iter().map(|d| d.v.trace()).sum();
    let odds = pr2 / (1.0 - pr2);
    match r0 {
        1 => {
            let b = Vector3::new(1.0, 0.0, -1.0);
            let denom: f64 = draws
                .iter()
                .map(|d| (b.transpose() * d.v * b)[0] / (1.0 - (1.0 - d.rho[0]).powi(2)))
                .sum();
            let k2 = odds * tr / denom;
            let sup = draws.iter().map(|d| d.rho[0] * d.rho[0] / 2.0).fold(0.0, f64::max);
            if k2 < sup {
                return Err(PmeError::Design(format!(
                    "kappa^2 = {k2} is infeasible (needs at least {sup})"
                )));
            }
            Ok(k2.sqrt())
        }
        2 => {
            let target = tr * odds;
            let gap = |k: f64| -> Result<f64> {
                let mut s = 0.0;
                for d in draws {
                    s += explained(2, d, k, rule)?;
                }
                Ok(s - target)
            };
            let (mut lo, mut hi) = (0.0, KAPPA_MAX);
            if gap(lo)? >= 0.0 || gap(hi)? < 0.0 {
                return Err(PmeError::Design(format!("no kappa in (0, {KAPPA_MAX}] attains pr2 = {pr2}")));
            }
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if gap(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
        _ => Err(PmeError::Design(format!("r0 must be 1 or 2, got {r0}"))),
    }
}

/// Average realized fit over the pilot replications at a given `kappa`.
///
/// Pilot streams are fixed, so every `kappa` sees the same shocks and parameters.
pub fn pilot_pr2(design: &VecmDesign, kappa: f64, seed: u64) -> Result<f64> {
    let p = design.pilot;
    let vals = (0..p.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey {
                seed,
                scope: "pilot",
                cell: 0,
                rep,
            };
            let units = draw_vecm_params(design, p.n, &mut key.rng("params"))?;
            let pis = vecm_pi(design, &units, kappa)?;
            let (_, sums) = vecm_paths(design, &units, &pis, p.t, &mut key.rng("paths"), false);
            Ok(sums.pr2())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Calibrates `kappa` by grid search over pilot simulations, then one bisection pass.
pub fn solve_kappa_simulated(design: &VecmDesign, seed: u64) -> Result<f64> {
    if design.model != Model::Varma11 {
        return Err(PmeError::Design("pilot calibration is for VARMA designs".into()));
    }
    let target = design.pr2;
    let lo = match design.r0 {
        1 => design.speed.range().1 / std::f64::consts::SQRT_2,
        _ => 0.0,
    };
    let mut hi = if design.r0 == 1 { 3.0 } else { 1.0 };
    while pilot_pr2(design, hi, seed)? < target && hi < KAPPA_MAX {
        hi *= 2.0;
    }
    const STEPS: usize = 12;
    let grid: Vec<f64> = (0..=STEPS).map(|k| lo + (hi - lo) * k as f64 / STEPS as f64).collect();
    let fits = grid
        .iter()
        .map(|&k| pilot_pr2(design, k, seed))
        .collect::<Result<Vec<f64>>>()?;
    let (mut best, mut best_gap) = (grid[0], f64::INFINITY);
    for (&k, &f) in grid.iter().zip(&fits) {
        if (f - target).abs() < best_gap {
            best = k;
            best_gap = (f - target).abs();
        }
    }
    let Some(j) = fits.windows(2).position(|w| w[0] <= target && target <= w[1]) else {
        return Ok(best);
    };
    let (mut a, mut b) = (grid[j], grid[j + 1]);
    for _ in 0..20 {
        let mid = 0.5 * (a + b);
        let f = pilot_pr2(design, mid, seed)?;
        if (f - target).abs() < best_gap {
            best = mid;
            best_gap = (f - target).abs();
        }
        if f < target {
            a = mid;
        } else {
            b = mid;
        }
        if best_gap < 1e-4 {
            break;
        }
    }
    Ok(best)
}

//! Panel generators for the Monte Carlo designs.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};

use super::design::{Design, ErrorDist, Model, VarDiffDesign, VecmDesign};
use super::kappa::{build_loadings_r1, build_loadings_r2, solve_kappa_var1, LoadingDraw};
use super::rng::stream;
use crate::error::{PmeError, Result};
use crate::panel::{PanelDataset, UnitSeries};

/// Pre-sample truncation for initial values.
pub const PRESAMPLE: usize = 50;
pub const N_FACTORS: usize = 4;
pub const FACTOR_RHO: (f64, f64) = (0.6, 0.4);
const MAX_PD_ATTEMPTS: usize = 100;

/// Identifies the random streams of one simulated panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub scope: &'static str,
    pub cell: u64,
    pub rep: u64,
}

impl StreamKey {
    pub fn new(seed: u64, cell: u64, rep: u64) -> Self {
        StreamKey {
            seed,
            scope: "rep",
            cell,
            rep,
        }
    }

    pub fn rng(&self, purpose: &str) -> ChaCha20Rng {
        stream(self.seed, &format!("{}/{purpose}", self.scope), &[self.cell, self.rep])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSource {
    /// Closed form from this panel's own parameter draws (VAR(1) only).
    Analytic,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub panel: PanelDataset,
    /// Realized pooled fit of the error-correction system, before factors.
    pub pr2: Option<f64>,
    pub kappa: Option<f64>,
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn shock(rng: &mut ChaCha20Rng, dist: ErrorDist) -> f64 {
    match dist {
        ErrorDist::Gaussian => normal(rng),
        ErrorDist::ChiSquared => {
            let e: f64 = rng.sample(Exp1);
            e - 1.0
        }
    }
}

fn shock3(rng: &mut ChaCha20Rng, dist: ErrorDist, chol: &Matrix3<f64>) -> Vector3<f64> {
    let e = Vector3::new(shock(rng, dist), shock(rng, dist), shock(rng, dist));
    chol * e
}

/// Unit-diagonal covariance with U(0, 0.5) off-diagonals, redrawn until positive definite.
pub fn draw_covariance(rng: &mut ChaCha20Rng) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    for _ in 0..MAX_PD_ATTEMPTS {
        let (a, b, c) = (
            rng.random_range(0.0..0.5),
            rng.random_range(0.0..0.5),
            rng.random_range(0.0..0.5),
        );
        let v = Matrix3::new(1.0, a, b, a, 1.0, c, b, c, 1.0);
        if let Some(ch) = v.cholesky() {
            return Ok((v, ch.l()));
        }
    }
    Err(PmeError::Design(format!(
        "no positive definite covariance after {MAX_PD_ATTEMPTS} draws"
    )))
}

/// MA coefficients of `Delta w` and the cumulated `B0' C*_l`.
///
/// `Upsilon_0 = I`, `Upsilon_1 = Psi - I - Theta`, `Upsilon_2 = Psi Upsilon_1 + Theta`,
/// `Upsilon_l = Psi Upsilon_{l-1}` beyond.
pub fn ma_coefficients(
    psi: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    b0: &DMatrix<f64>,
    m_trunc: usize,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let m = psi.nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut ups = vec![eye.clone()];
    for l in 1..=m_trunc {
        let next = match l {
            1 => psi - &eye - theta,
            2 => psi * &ups[1] + theta,
            _ => psi * &ups[l - 1],
        };
        ups.push(next);
    }
    let mut cum = DMatrix::zeros(b0.ncols(), m);
    let bc = ups
        .iter()
        .map(|u| {
            cum += b0.transpose() * u;
            cum.clone()
        })
        .collect();
    (ups, bc)
}

/// `sum_{j <= l} Upsilon_j` for diagonal `Theta`, fixed size.
fn cumulated_ma3(psi: &Matrix3<f64>, theta: &Vector3<f64>, m_trunc: usize) -> Vec<Matrix3<f64>> {
    let th = Matrix3::from_diagonal(theta);
    let eye = Matrix3::identity();
    let mut out = Vec::with_capacity(m_trunc + 1);
    let mut prev = eye;
    let mut cum = eye;
    out.push(cum);
    for l in 1..=m_trunc {
        let next = match l {
            1 => psi - eye - th,
            2 => psi * prev + th,
            _ => psi * prev,
        };
        cum += next;
        out.push(cum);
        prev = next;
    }
    out
}

#[derive(Debug, Clone)]
pub(crate) struct VecmUnit {
    pub v: Matrix3<f64>,
    pub chol: Matrix3<f64>,
    pub rho: [f64; 2],
    pub theta: Vector3<f64>,
    pub mu: Vector3<f64>,
}

pub(crate) fn draw_vecm_params(design: &VecmDesign, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<VecmUnit>> {
    let (lo, hi) = design.speed.range();
    (0..n)
        .map(|_| {
            let (v, chol) = draw_covariance(rng)?;
            let mut rho = [0.0; 2];
            for r in rho.iter_mut().take(design.r0) {
                *r = rng.random_range(lo..hi);
            }
            let theta = match design.model {
                Model::Var1 => Vector3::zeros(),
                Model::Varma11 => Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            };
            let mu = Vector3::from_fn(|_, _| normal(rng));
            Ok(VecmUnit {
                v,
                chol,
                rho,
                theta,
                mu,
            })
        })
        .collect()
}

/// `Pi_i = A_i B0'` for every unit.
pub(crate) fn vecm_pi(design: &VecmDesign, units: &[VecmUnit], kappa: f64) -> Result<Vec<Matrix3<f64>>> {
    units
        .iter()
        .map(|u| match design.r0 {
            1 => {
                let a = build_loadings_r1(u.rho[0], kappa)?;
                Ok(a * Vector3::new(1.0, 0.0, -1.0).transpose())
            }
            _ => {
                let a: Matrix3x2<f64> = build_loadings_r2(u.rho[0], u.rho[1], kappa);
                let b0 = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, -1.0, -1.0);
                Ok(a * b0.transpose())
            }
        })
        .collect()
}

fn projection(design: &VecmDesign) -> Matrix3<f64> {
    match design.r0 {
        1 => {
            let b = Vector3::new(1.0, 0.0, -1.0);
            b * b.transpose() / 2.0
        }
        _ => {
            let b = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, -1.0, -1.0);
            let btb = b.transpose() * b;
            b * btb.try_inverse().expect("B0'B0 invertible") * b.transpose()
        }
    }
}

pub(crate) struct FitSums {
    pub resid: f64,
    pub total: f64,
}

impl FitSums {
    pub fn pr2(&self) -> f64 {
        1.0 - self.resid / self.total
    }
}

/// Simulates the error-correction paths. Returns per-unit `T x 3` levels when `keep` is set.
pub(crate) fn vecm_paths(
    design: &VecmDesign,
    units: &[VecmUnit],
    pis: &[Matrix3<f64>],
    t: usize,
    rng: &mut ChaCha20Rng,
    keep: bool,
) -> (Vec<DMatrix<f64>>, FitSums) {
    let h = projection(design);
    let dist = design.error_dist;
    let mut out = Vec::with_capacity(if keep { units.len() } else { 0 });
    let mut sums = FitSums { resid: 0.0, total: 0.0 };
    let mut pre = vec![Vector3::zeros(); PRESAMPLE + 1];
    for (u, pi) in units.iter().zip(pis) {
        let psi = Matrix3::identity() - pi;
        let cum = cumulated_ma3(&psi, &u.theta, PRESAMPLE);
        for p in pre.iter_mut() {
            *p = shock3(rng, dist, &u.chol);
        }
        let mut lift = u.mu;
        for (c, p) in cum.iter().zip(&pre) {
            lift += c * p;
        }
        let mut w = h * lift;
        let d = pi * u.mu;
        let mut u_prev = pre[0];
        let mut vals = if keep { DMatrix::zeros(t, 3) } else { DMatrix::zeros(0, 0) };
        let mut s1 = Vector3::<f64>::zeros();
        let mut s2 = Vector3::<f64>::zeros();
        for s in 0..t {
            let e = shock3(rng, dist, &u.chol);
            let dw = d - pi * w + e - u.theta.component_mul(&u_prev);
            w += dw;
            u_prev = e;
            sums.resid += e.norm_squared();
            s1 += dw;
            s2 += dw.component_mul(&dw);
            if keep {
                for k in 0..3 {
                    vals[(s, k)] = w[k];
                }
            }
        }
        sums.total += (s2 - s1.component_mul(&s1) / t as f64).sum();
        if keep {
            out.push(vals);
        }
    }
    (out, sums)
}

/// Common factors with an AR break at `[T/2]` and unit loadings `U[0, 0.4]`.
fn add_factors(values: &mut [DMatrix<f64>], t: usize, rng: &mut ChaCha20Rng) {
    let m = values.first().map(|v| v.ncols()).unwrap_or(0);
    let loads: Vec<DMatrix<f64>> = values
        .iter()
        .map(|_| DMatrix::from_fn(m, N_FACTORS, |_, _| rng.random_range(0.0..0.4)))
        .collect();
    let mut f = Vector4::from_fn(|_, _| normal(rng));
    let half = t / 2;
    let mut path = Vec::with_capacity(t);
    for s in 1..=t {
        let r = if s < half { FACTOR_RHO.0 } else { FACTOR_RHO.1 };
        let v = Vector4::from_fn(|_, _| normal(rng));
        f = f * r + v * (1.0 - r * r).sqrt();
        path.push(f);
    }
    for (vals, g) in values.iter_mut().zip(&loads) {
        for (s, f) in path.iter().enumerate() {
            for k in 0..m {
                let mut acc = 0.0;
                for j in 0..N_FACTORS {
                    acc += g[(k, j)] * f[j];
                }
                vals[(s, k)] += acc;
            }
        }
    }
}

fn to_panel(values: Vec<DMatrix<f64>>) -> Result<PanelDataset> {
    let units = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| UnitSeries::consecutive(format!("{}", i + 1), 1, v))
        .collect();
    PanelDataset::from_units(units)
}

pub fn dgp_vecm(design: &VecmDesign, n: usize, t: usize, kappa: KappaSource, key: StreamKey) -> Result<Simulated> {
    Design::Vecm(design.clone()).check()?;
    let mut prng = key.rng("params");
    let units = draw_vecm_params(design, n, &mut prng)?;
    let kappa = match kappa {
        KappaSource::Fixed(k) => k,
        KappaSource::Analytic => {
            if design.model != Model::Var1 {
                return Err(PmeError::Design(
                    "VARMA loadings need a calibrated kappa; no closed form".into(),
                ));
            }
            let draws: Vec<LoadingDraw> = units.iter().map(|u| LoadingDraw { v: u.v, rho: u.rho }).collect();
            solve_kappa_var1(design.r0, &draws, design.pr2, design.loading_rule)?
        }
    };
    let pis = vecm_pi(design, &units, kappa)?;
    let (mut values, sums) = vecm_paths(design, &units, &pis, t, &mut key.rng("paths"), true);
    if design.factors {
        add_factors(&mut values, t, &mut key.rng("factors"));
    }
    Ok(Simulated {
        panel: to_panel(values)?,
        pr2: Some(sums.pr2()),
        kappa: Some(kappa),
    })
}

pub fn dgp_var_diff(design: &VarDiffDesign, n: usize, t: usize, key: StreamKey) -> Result<Simulated> {
    let mut prng = key.rng("params");
    let (lo, hi) = design.persistence.range();
    let params = (0..n)
        .map(|_| {
            let (_, chol) = draw_covariance(&mut prng)?;
            let phi = Vector3::from_fn(|_, _| prng.random_range(lo..hi));
            Ok((chol, phi))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = key.rng("paths");
    let mut values: Vec<DMatrix<f64>> = params
        .iter()
        .map(|(chol, phi)| {
            let mut dw = Vector3::from_fn(|k, _| normal(&mut rng) / (1.0 - phi[k] * phi[k]).sqrt());
            let mut w = dw;
            let mut vals = DMatrix::zeros(t, 3);
            for s in 0..t {
                let u = shock3(&mut rng, ErrorDist::Gaussian, chol);
                dw = phi.component_mul(&dw) + u;
                w += dw;
                for k in 0..3 {
                    vals[(s, k)] = w[k];
                }
            }
            vals
        })
        .collect();
    if design.factors {
        add_factors(&mut values, t, &mut key.rng("factors"));
    }
    Ok(Simulated {
        panel: to_panel(values)?,
        pr2: None,
        kappa: None,
    })
}

pub fn dgp_pb(n: usize, t: usize, key: StreamKey) -> Result<Simulated> {
    let mut prng = key.rng("params");
    let params: Vec<(f64, Matrix2<f64>, f64)> = (0..n)
        .map(|_| {
            let a = prng.random_range(0.2..0.3);
            let s1: f64 = prng.random_range(0.8..1.2);
            let s2: f64 = prng.random_range(0.8..1.2);
            let rho = prng.random_range(0.3..0.7);
            let mu = normal(&mut prng);
            let (s1, s2) = (s1.sqrt(), s2.sqrt());
            let chol = Matrix2::new(s1, 0.0, s2 * rho, s2 * (1.0 - rho * rho).sqrt());
            (a, chol, mu)
        })
        .collect();
    let mut rng = key.rng("paths");
    let values = params
        .iter()
        .map(|(a, chol, mu)| {
            let c = a * mu;
            let var_diff = {
                let v = chol * chol.transpose();
                v[(0, 0)] + v[(1, 1)] - 2.0 * v[(0, 1)]
            };
            let z0 = mu + normal(&mut rng) * (var_diff / (1.0 - (1.0 - a).powi(2))).sqrt();
            let mut w = Vector2::new(z0, 0.0);
            let mut vals = DMatrix::zeros(t, 2);
            for s in 0..t {
                let u = chol * Vector2::new(normal(&mut rng), normal(&mut rng));
                w = Vector2::new(w[0] + c - a * (w[0] - w[1]) + u[0], w[1] + u[1]);
                vals[(s, 0)] = w[0];
                vals[(s, 1)] = w[1];
            }
            vals
        })
        .collect();
    Ok(Simulated {
        panel: to_panel(values)?,
        pr2: None,
        kappa: None,
    })
}

/// Generates one panel of any design.
pub fn generate(design: &Design, n: usize, t: usize, kappa: KappaSource, key: StreamKey) -> Result<Simulated> {
    match design {
        Design::Vecm(v) => dgp_vecm(v, n, t, kappa, key),
        Design::VarDiff(v) => dgp_var_diff(v, n, t, key),
        Design::Pb => dgp_pb(n, t, key),
    }
}

#[cfg(test)]
pub(crate) fn unit_pi_r1(rho: f64, kappa: f64) -> Matrix3<f64> {
    build_loadings_r1(rho, kappa).unwrap() * Vector3::new(1.0, 0.0, -1.0).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::design::{Persistence, Speed};

    fn key() -> StreamKey {
        StreamKey::new(11, 0, 0)
    }

    #[test]
    fn random_walk_has_trivial_ma() {
        let (ups, bc) = ma_coefficients(
            &DMatrix::identity(3, 3),
            &DMatrix::zeros(3, 3),
            &DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]),
            10,
        );
        assert_eq!(ups[0], DMatrix::identity(3, 3));
        assert!(ups[1..].iter().all(|u| u.amax() == 0.0));
        assert!(bc.iter().all(|b| b == &bc[0]));
    }

    /// Coefficients of (I - Psi L)^{-1} (I - Theta L) (1 - L), via the power series of the inverse.
    fn convolution_oracle(psi: &DMatrix<f64>, theta: &DMatrix<f64>, len: usize) -> Vec<DMatrix<f64>> {
        let m = psi.nrows();
        let eye = DMatrix::<f64>::identity(m, m);
        let mut inv = vec![eye.clone()];
        for l in 1..len {
            inv.push(psi * &inv[l - 1]);
        }
        let lhs = [eye.clone(), -(&eye + theta), theta.clone()];
        (0..len)
            .map(|l| {
                let mut acc = DMatrix::zeros(m, m);
                for (j, c) in lhs.iter().enumerate() {
                    if j <= l {
                        acc += &inv[l - j] * c;
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn ma_recursion_matches_convolution() {
        let pi = unit_pi_r1(0.2, 1.47);
        let psi = DMatrix::from_iterator(3, 3, (Matrix3::identity() - pi).iter().copied());
        for th in [DMatrix::zeros(3, 3), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, -0.2, 0.4]))] {
            let (ups, _) = ma_coefficients(&psi, &th, &DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]), 10);
            let oracle = convolution_oracle(&psi, &th, 11);
            for (a, b) in ups.iter().zip(&oracle) {
                assert!((a - b).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_size_cumulation_matches_public() {
        let pi = unit_pi_r1(0.25, 1.3);
        let psi3 = Matrix3::identity() - pi;
        let th = Vector3::new(0.1, -0.3, 0.45);
        let cum = cumulated_ma3(&psi3, &th, 20);
        let psi = DMatrix::from_iterator(3, 3, psi3.iter().copied());
        let thd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, -0.3, 0.45]));
        let b0 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let (_, bc) = ma_coefficients(&psi, &thd, &b0, 20);
        for (c, b) in cum.iter().zip(&bc) {
            let c = DMatrix::from_iterator(3, 3, c.iter().copied());
            assert!((b0.transpose() * c - b).amax() < 1e-12);
        }
        // the relation component decays geometrically
        assert!(bc[20].amax() < 0.1 * bc[1].amax());
    }

    #[test]
    fn deterministic_for_fixed_key() {
        let d = VecmDesign::var1(1);
        let a = dgp_vecm(&d, 5, 20, KappaSource::Analytic, key()).unwrap();
        let b = dgp_vecm(&d, 5, 20, KappaSource::Analytic, key()).unwrap();
        assert_eq!(a, b);
        let c = dgp_vecm(&d, 5, 20, KappaSource::Analytic, StreamKey::new(11, 0, 1)).unwrap();
        assert_ne!(a.panel, c.panel);
        let p = dgp_pb(4, 10, key()).unwrap();
        assert_eq!(p, dgp_pb(4, 10, key()).unwrap());
        let vd = VarDiffDesign {
            persistence: Persistence::High,
            factors: true,
        };
        assert_eq!(dgp_var_diff(&vd, 4, 10, key()).unwrap(), dgp_var_diff(&vd, 4, 10, key()).unwrap());
    }

    #[test]
    fn factors_leave_the_rest_unchanged() {
        let mut d = VecmDesign::var1(2);
        let plain = dgp_vecm(&d, 6, 30, KappaSource::Analytic, key()).unwrap();
        d.factors = true;
        let with = dgp_vecm(&d, 6, 30, KappaSource::Analytic, key()).unwrap();
        assert_eq!(plain.pr2, with.pr2);
        assert_ne!(plain.panel, with.panel);
        let diff = with.panel.units()[0].values() - plain.panel.units()[0].values();
        assert!(diff.amax() < 10.0);
    }

    #[test]
    fn shapes() {
        let mut d = VecmDesign::var1(1);
        d.model = Model::Varma11;
        d.speed = Speed::Slow;
        d.error_dist = ErrorDist::ChiSquared;
        let s = dgp_vecm(&d, 3, 12, KappaSource::Fixed(1.5), key()).unwrap();
        assert_eq!(s.panel.n(), 3);
        assert_eq!(s.panel.m(), 3);
        assert_eq!(s.panel.lengths(), vec![12; 3]);
        assert!(dgp_vecm(&d, 3, 12, KappaSource::Analytic, key()).is_err());
    }

    #[test]
    fn zero_loadings_give_random_walks() {
        // kappa = rho / sqrt(2) is the smallest feasible scale; rho = 0 there makes A = 0
        let units = vec![VecmUnit {
            v: Matrix3::identity(),
            chol: Matrix3::identity(),
            rho: [0.0, 0.0],
            theta: Vector3::zeros(),
            mu: Vector3::new(0.3, -0.1, 2.0),
        }];
        let d = VecmDesign::var1(1);
        let pis = vecm_pi(&d, &units, 0.0).unwrap();
        assert_eq!(pis[0], Matrix3::zeros());
        let mut rng = key().rng("paths");
        let t = 4000;
        let (vals, sums) = vecm_paths(&d, &units, &pis, t, &mut rng, true);
        assert!(sums.pr2().abs() < 0.01);
        let v = &vals[0];
        for k in 0..3 {
            let mean_diff = (v[(t - 1, k)] - v[(0, k)]) / (t - 1) as f64;
            let se = 1.0 / ((t - 1) as f64).sqrt();
            assert!(mean_diff.abs() < 3.0 * se, "drift {mean_diff}");
        }
    }
}

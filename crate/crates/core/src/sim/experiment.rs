//! Replication loop and summary statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{Design, Model};
use super::dgp::{generate, KappaSource, StreamKey};
use super::kappa::solve_kappa_simulated;
use super::rng::GENERATOR;
use crate::error::{PmeError, Result};
use crate::longrun::{correlation_eigenvalues, fit, IdentificationScheme, CRITICAL_5PCT};
use crate::moments::{pooled_covariance, SubsamplePlan};
use crate::panel::{EstimationConfig, SubsampleRule, TimeAverage};
use crate::rank::select_rank;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub design: Design,
    /// `(n, T)` cells.
    pub grid: Vec<(usize, usize)>,
    pub reps: usize,
    pub q: SubsampleRule,
    pub deltas: Vec<f64>,
    pub c: f64,
    pub seed: u64,
    /// Alternative is `truth + power_shift`.
    pub power_shift: f64,
    pub scale_for_selection: bool,
    pub threshold_t: TimeAverage,
}

impl ExperimentSpec {
    pub fn new(design: Design, n: usize, t: usize, reps: usize, seed: u64) -> Self {
        ExperimentSpec {
            design,
            grid: vec![(n, t)],
            reps,
            q: SubsampleRule::Fixed(2),
            deltas: vec![0.25, 0.5],
            c: 1.0,
            seed,
            power_shift: 0.03,
            scale_for_selection: true,
            threshold_t: TimeAverage::Arithmetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFrequency {
    pub delta: f64,
    /// `counts[k]` replications selected `k` relations.
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStats {
    /// Variable position of the coefficient.
    pub variable: usize,
    /// Relation index.
    pub relation: usize,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Rejection rate of the true value at 5%.
    pub size: f64,
    /// Rejection rate of `truth + power_shift` at 5%.
    pub power: f64,
    pub mean_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub t: usize,
    pub completed: usize,
    pub failures: usize,
    pub selection: Vec<SelectionFrequency>,
    pub coefficients: Vec<CoefficientStats>,
    pub mean_pr2: Option<f64>,
    pub mean_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub generator: String,
    pub true_rank: usize,
    /// Calibrated loading scale, when it is shared by all replications.
    pub kappa: Option<f64>,
    pub cells: Vec<CellReport>,
}

struct RepOutcome {
    ranks: Vec<usize>,
    theta: Option<DMatrix<f64>>,
    se: Option<DMatrix<f64>>,
    pr2: Option<f64>,
    kappa: Option<f64>,
}

fn one_rep(spec: &ExperimentSpec, kappa: KappaSource, n: usize, t: usize, key: StreamKey) -> Result<RepOutcome> {
    let sim = generate(&spec.design, n, t, kappa, key)?;
    let panel = &sim.panel;
    let config = EstimationConfig {
        q: spec.q,
        c: spec.c,
        scale_for_selection: spec.scale_for_selection,
        threshold_t: spec.threshold_t,
        ..Default::default()
    };
    let eigs = correlation_eigenvalues(panel, &config)?;
    let plan = SubsamplePlan::new(panel, spec.q)?;
    let t_ave = plan.t_ave(spec.threshold_t);
    let ranks = spec
        .deltas
        .iter()
        .map(|&d| select_rank(&eigs, t_ave, d, spec.c).r_tilde)
        .collect();
    let r0 = spec.design.true_rank();
    let (theta, se) = if r0 > 0 {
        let moments = pooled_covariance(panel, &plan)?;
        let est = fit(&moments, r0, &IdentificationScheme::Normalized, None)?;
        (est.theta_hat, est.std_errors)
    } else {
        (None, None)
    };
    Ok(RepOutcome {
        ranks,
        theta,
        se,
        pr2: sim.pr2,
        kappa: sim.kappa,
    })
}

fn summarize(spec: &ExperimentSpec, n: usize, t: usize, outcomes: Vec<Result<RepOutcome>>) -> Result<CellReport> {
    let total = outcomes.len();
    let ok: Vec<RepOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failures = total - ok.len();
    if failures as f64 > MAX_FAILURE_SHARE * total as f64 {
        return Err(PmeError::TooManyFailures { failed: failures, total });
    }
    let done = ok.len();
    let m = spec.design.m();
    let selection = spec
        .deltas
        .iter()
        .enumerate()
        .map(|(j, &delta)| {
            let mut counts = vec![0usize; m + 1];
            for o in &ok {
                counts[o.ranks[j]] += 1;
            }
            let frequencies = counts.iter().map(|&c| c as f64 / done.max(1) as f64).collect();
            SelectionFrequency {
                delta,
                counts,
                frequencies,
            }
        })
        .collect();

    let mut coefficients = Vec::new();
    if let Some(truth) = spec.design.true_theta() {
        let r0 = truth.ncols();
        for rel in 0..r0 {
            for row in 0..truth.nrows() {
                let tv = truth[(row, rel)];
                let alt = tv + spec.power_shift;
                let (mut se_sum, mut err_sum, mut rej0, mut rej1) = (0.0, 0.0, 0usize, 0usize);
                let errs: Vec<f64> = ok
                    .iter()
                    .map(|o| {
                        let th = o.theta.as_ref().expect("estimate present")[(row, rel)];
                        let se = o.se.as_ref().expect("se present")[(row, rel)];
                        se_sum += se;
                        if ((th - tv) / se).abs() > CRITICAL_5PCT {
                            rej0 += 1;
                        }
                        if ((th - alt) / se).abs() > CRITICAL_5PCT {
                            rej1 += 1;
                        }
                        err_sum += th - tv;
                        th - tv
                    })
                    .collect();
                let k = done.max(1) as f64;
                let bias = err_sum / k;
                let var = errs.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / k;
                coefficients.push(CoefficientStats {
                    variable: r0 + row,
                    relation: rel,
                    truth: tv,
                    bias,
                    rmse: (bias * bias + var).sqrt(),
                    size: rej0 as f64 / k,
                    power: rej1 as f64 / k,
                    mean_std_error: se_sum / k,
                });
            }
        }
    }
    let mean_of = |f: &dyn Fn(&RepOutcome) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(CellReport {
        n,
        t,
        completed: done,
        failures,
        selection,
        coefficients,
        mean_pr2: mean_of(&|o| o.pr2),
        mean_kappa: mean_of(&|o| o.kappa),
    })
}

fn run_inner(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.design.check()?;
    if spec.reps == 0 {
        return Err(PmeError::Input("reps must be at least 1".into()));
    }
    if spec.grid.is_empty() {
        return Err(PmeError::Input("empty (n, T) grid".into()));
    }
    let kappa = match &spec.design {
        Design::Vecm(v) if v.model == Model::Varma11 => Some(solve_kappa_simulated(v, spec.seed)?),
        _ => None,
    };
    let source = kappa.map_or(KappaSource::Analytic, KappaSource::Fixed);
    let cells = spec
        .grid
        .iter()
        .enumerate()
        .map(|(ci, &(n, t))| {
            let outcomes: Vec<Result<RepOutcome>> = (0..spec.reps as u64)
                .into_par_iter()
                .map(|rep| one_rep(spec, source, n, t, StreamKey::new(spec.seed, ci as u64, rep)))
                .collect();
            summarize(spec, n, t, outcomes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        spec: spec.clone(),
        generator: GENERATOR.to_string(),
        true_rank: spec.design.true_rank(),
        kappa,
        cells,
    })
}

/// Runs every cell; `threads = None` uses the global rayon pool.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentReport> {
    match threads {
        None => run_inner(spec),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| PmeError::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(spec))
        }
    }
}

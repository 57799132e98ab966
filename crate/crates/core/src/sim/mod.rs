//! Seeded data-generating processes and the Monte Carlo runner.

pub mod design;
pub mod dgp;
pub mod experiment;
pub mod kappa;
pub mod rng;

pub use design::{Design, ErrorDist, KappaPilot, LoadingRule, Model, Persistence, Speed, VarDiffDesign, VecmDesign};
pub use dgp::{dgp_pb, dgp_var_diff, dgp_vecm, generate, ma_coefficients, KappaSource, Simulated, StreamKey};
pub use experiment::{run_experiment, CellReport, CoefficientStats, ExperimentReport, ExperimentSpec};

//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::error::PmeError;
use crate::io::report::{matrix_rows, ExclusionLog};
use crate::io::{
    apply_filters, read_csv_long, write_csv_long, ConfigEcho, CsvColumns, EstimateReport, FilterSpec, RatioTrim,
    RawRecords, RunReport, SampleSummary,
};
use crate::longrun::{correlation_eigenvalues, estimate, Diagnostic, IdentificationScheme};
use crate::moments::SubsamplePlan;
use crate::panel::{EstimationConfig, PanelDataset, SubsampleRule, TimeAverage};
use crate::rank::{select_rank, RankSelection};
use crate::sim::kappa::solve_kappa_simulated;
use crate::sim::{
    generate, run_experiment, Design, ErrorDist, ExperimentReport, ExperimentSpec, KappaPilot, KappaSource,
    LoadingRule, Model, Persistence, Speed, StreamKey, VarDiffDesign, VecmDesign,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(PmeError),
}

impl From<PmeError> for CliError {
    fn from(e: PmeError) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "pme", version, about = "Pooled minimum eigenvalue estimation of long-run relations in panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the correlation matrix and the selected number of relations.
    SelectRank(SelectRankArgs),
    /// Selection, identification and inference.
    Estimate(EstimateArgs),
    /// Monte Carlo experiment.
    Simulate(SimulateArgs),
    /// Sample filters on a long-format CSV.
    Filter(FilterArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Long-format CSV; when absent a panel is simulated from the design flags.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "unit")]
    unit_col: String,
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Value columns, comma separated (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<String>>,
    #[command(flatten)]
    design: DesignArgs,
    /// Cross-section size of a simulated panel.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Time dimension of a simulated panel.
    #[arg(long, default_value_t = 50)]
    t: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum DesignKind {
    /// Error-correction model, `--model` picks the dynamics.
    Vecm,
    Var1,
    Varma,
    VarDiff,
    Pb,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ModelArg {
    Var1,
    Varma11,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum DistArg {
    Gaussian,
    ChiSquared,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum SpeedArg {
    Moderate,
    Slow,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum PersistenceArg {
    Low,
    Moderate,
    High,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum LoadingRuleArg {
    Published,
    Stationary,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum TimeAverageArg {
    Arithmetic,
    Harmonic,
}

impl From<TimeAverageArg> for TimeAverage {
    fn from(a: TimeAverageArg) -> Self {
        match a {
            TimeAverageArg::Arithmetic => TimeAverage::Arithmetic,
            TimeAverageArg::Harmonic => TimeAverage::Harmonic,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    #[arg(long, value_enum, default_value = "var1")]
    design: DesignKind,
    #[arg(long, default_value_t = 1)]
    r0: usize,
    /// Overrides the dynamics implied by `--design`.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "gaussian")]
    dist: DistArg,
    #[arg(long, default_value_t = 0.2)]
    pr2: f64,
    #[arg(long, value_enum, default_value = "moderate")]
    speed: SpeedArg,
    #[arg(long, value_enum, default_value = "high")]
    persistence: PersistenceArg,
    /// Add interactive time effects.
    #[arg(long)]
    factors: bool,
    #[arg(long, value_enum, default_value = "published")]
    loading_rule: LoadingRuleArg,
    #[arg(long, default_value_t = 200)]
    pilot_reps: usize,
    #[arg(long, default_value_t = 500)]
    pilot_n: usize,
    #[arg(long, default_value_t = 100)]
    pilot_t: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl DesignArgs {
    fn design(&self) -> CliResult<Design> {
        let vecm = |model: Model| -> CliResult<Design> {
            let model = match self.model {
                Some(ModelArg::Var1) => Model::Var1,
                Some(ModelArg::Varma11) => Model::Varma11,
                None => model,
            };
            if !(self.r0 == 1 || self.r0 == 2) {
                return Err(usage(format!("--r0 must be 1 or 2 for error-correction designs, got {}", self.r0)));
            }
            if !(self.pr2 > 0.0 && self.pr2 < 1.0) {
                return Err(usage(format!("--pr2 must lie in (0, 1), got {}", self.pr2)));
            }
            Ok(Design::Vecm(VecmDesign {
                r0: self.r0,
                model,
                error_dist: match self.dist {
                    DistArg::Gaussian => ErrorDist::Gaussian,
                    DistArg::ChiSquared => ErrorDist::ChiSquared,
                },
                speed: match self.speed {
                    SpeedArg::Moderate => Speed::Moderate,
                    SpeedArg::Slow => Speed::Slow,
                },
                pr2: self.pr2,
                factors: self.factors,
                pilot: KappaPilot {
                    reps: self.pilot_reps,
                    n: self.pilot_n,
                    t: self.pilot_t,
                },
                loading_rule: match self.loading_rule {
                    LoadingRuleArg::Published => LoadingRule::Published,
                    LoadingRuleArg::Stationary => LoadingRule::Stationary,
                },
            }))
        };
        let d = match self.design {
            DesignKind::Vecm | DesignKind::Var1 => vecm(Model::Var1)?,
            DesignKind::Varma => vecm(Model::Varma11)?,
            DesignKind::VarDiff => Design::VarDiff(VarDiffDesign {
                persistence: match self.persistence {
                    PersistenceArg::Low => Persistence::Low,
                    PersistenceArg::Moderate => Persistence::Moderate,
                    PersistenceArg::High => Persistence::High,
                },
                factors: self.factors,
            }),
            DesignKind::Pb => Design::Pb,
        };
        d.check().map_err(|e| usage(e.to_string()))?;
        Ok(d)
    }
}

#[derive(Args, Debug, Clone)]
struct SelectionArgs {
    /// Sub-samples per unit: an integer of at least 2, or `auto`.
    #[arg(long, default_value = "2", value_parser = parse_q)]
    q: SubsampleRule,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Select on the unscaled panel.
    #[arg(long)]
    no_scale: bool,
    #[arg(long, value_enum, default_value = "arithmetic")]
    threshold_t: TimeAverageArg,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SelectRankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    sel: SelectionArgs,
    /// Threshold exponents, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5")]
    delta: Vec<f64>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    sel: SelectionArgs,
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    /// Number of relations; skips selection.
    #[arg(long)]
    rank: Option<usize>,
    /// Variables carrying the unit normalization, one per relation, comma separated.
    #[arg(long, value_delimiter = ',')]
    normalize_on: Option<Vec<String>>,
    /// Null values for the free coefficients: rows split by `;`, entries by `,`.
    #[arg(long, allow_hyphen_values = true)]
    null: Option<String>,
    /// Drop units with gaps or fewer observations before estimating.
    #[arg(long)]
    min_t: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Cross-section sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "500")]
    n: Vec<usize>,
    /// Time dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    t: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value = "2", value_parser = parse_q)]
    q: SubsampleRule,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5")]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Distance of the power alternative from the truth.
    #[arg(long, default_value_t = 0.03, allow_hyphen_values = true)]
    shift: f64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "unit")]
    unit_col: String,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<String>>,
    /// Cleaned CSV destination (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Exclusion log destination as JSON.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    min_t: usize,
    #[arg(long)]
    allow_nonpositive: bool,
    #[arg(long)]
    log_transform: bool,
    #[arg(long)]
    keep_longest_run: bool,
    /// `num/den` or `num/den:lower:upper`; repeatable.
    #[arg(long, value_parser = parse_trim)]
    trim: Vec<RatioTrim>,
    /// Print the report as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

fn parse_q(s: &str) -> std::result::Result<SubsampleRule, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SubsampleRule::Auto);
    }
    match s.parse::<usize>() {
        Ok(q) if q >= 2 => Ok(SubsampleRule::Fixed(q)),
        _ => Err(format!("expected an integer of at least 2 or `auto`, got {s:?}")),
    }
}

/// `num/den` with optional `:lower:upper` percentiles.
pub fn parse_trim(s: &str) -> std::result::Result<RatioTrim, String> {
    let mut parts = s.split(':');
    let ratio = parts.next().unwrap_or_default();
    let (num, den) = ratio
        .split_once('/')
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| format!("expected num/den, got {ratio:?}"))?;
    let mut t = RatioTrim::new(num.trim(), den.trim());
    let rest: Vec<&str> = parts.collect();
    match rest.as_slice() {
        [] => {}
        [lo, hi] => {
            t.lower_pct = lo.trim().parse().map_err(|_| format!("bad lower percentile {lo:?}"))?;
            t.upper_pct = hi.trim().parse().map_err(|_| format!("bad upper percentile {hi:?}"))?;
            if !(0.0 <= t.lower_pct && t.lower_pct < t.upper_pct && t.upper_pct <= 100.0) {
                return Err(format!("need 0 <= lower < upper <= 100, got {lo}:{hi}"));
            }
        }
        _ => return Err(format!("expected num/den:lower:upper, got {s:?}")),
    }
    Ok(t)
}

/// Rows split by `;`, entries by `,`; every row must have the same length.
pub fn parse_matrix(s: &str) -> std::result::Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    let x = x.trim();
                    match x.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(format!("{x:?} is not a finite number")),
                    }
                })
                .collect()
        })
        .collect::<std::result::Result<_, _>>()?;
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err("rows have different lengths".into());
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}

fn load_panel(a: &InputArgs) -> CliResult<(PanelDataset, Option<u64>)> {
    match &a.input {
        Some(path) => {
            let cols = CsvColumns {
                unit: a.unit_col.clone(),
                time: a.time_col.clone(),
                values: a.vars.clone(),
            };
            Ok((read_csv_long(path, &cols)?.to_panel()?, None))
        }
        None => {
            let design = a.design.design()?;
            if a.n == 0 || a.t < 4 {
                return Err(usage("a simulated panel needs --n >= 1 and --t >= 4"));
            }
            let source = match &design {
                Design::Vecm(v) if v.model == Model::Varma11 => {
                    KappaSource::Fixed(solve_kappa_simulated(v, a.design.seed)?)
                }
                _ => KappaSource::Analytic,
            };
            let sim = generate(&design, a.n, a.t, source, StreamKey::new(a.design.seed, 0, 0))?;
            Ok((sim.panel, Some(a.design.seed)))
        }
    }
}

fn drop_short_units(panel: PanelDataset, min_t: usize) -> CliResult<(PanelDataset, ExclusionLog)> {
    let spec = FilterSpec {
        min_t,
        require_positive: false,
        ..FilterSpec::default()
    };
    let out = apply_filters(&RawRecords::from_panel(&panel), &spec)?;
    Ok((
        out.panel,
        ExclusionLog {
            counts: out.counts,
            units: out.exclusions,
        },
    ))
}

fn config_echo(command: &str, input: &InputArgs, sel: &SelectionArgs, deltas: Vec<f64>, seed: Option<u64>) -> ConfigEcho {
    ConfigEcho {
        command: command.into(),
        input: input.input.as_ref().map(|p| p.display().to_string()),
        q: sel.q,
        deltas,
        c: sel.c,
        rank: None,
        normalize_on: None,
        null_values: None,
        scale_for_selection: !sel.no_scale,
        threshold_t: sel.threshold_t.into(),
        min_t: None,
        seed,
    }
}

fn selection_config(sel: &SelectionArgs, delta: f64) -> EstimationConfig {
    EstimationConfig {
        q: sel.q,
        delta,
        c: sel.c,
        scale_for_selection: !sel.no_scale,
        threshold_t: sel.threshold_t.into(),
        ..Default::default()
    }
}

fn check_positive(name: &str, x: f64) -> CliResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be positive, got {x}")))
    }
}

fn fmt_row(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:>10.4}")).collect::<Vec<_>>().join(" ")
}

fn write_selection(out: &mut String, sample: &SampleSummary, sel: &[RankSelection]) {
    let _ = writeln!(out, "n = {}, m = {}, T_ave = {:.1}, max T_i = {}, sum T_i = {}", sample.n, sample.m, sample.t_ave, sample.t_max, sample.total_observations);
    if let Some(s) = sel.first() {
        let _ = writeln!(out, "eigenvalues: {}", fmt_row(&s.eigenvalues));
    }
    for s in sel {
        let _ = writeln!(out, "delta = {:<5} threshold = {:.3}  r = {}", s.delta, s.threshold, s.r_tilde);
    }
}

fn select_rank_cmd(a: &SelectRankArgs) -> CliResult<RunReport> {
    check_positive("c", a.sel.c)?;
    if a.delta.is_empty() {
        return Err(usage("--delta needs at least one value"));
    }
    for &d in &a.delta {
        check_positive("delta", d)?;
    }
    let (panel, seed) = load_panel(&a.input)?;
    let config = selection_config(&a.sel, a.delta[0]);
    let plan = SubsamplePlan::new(&panel, config.q)?;
    let eigs = correlation_eigenvalues(&panel, &config)?;
    let t_ave = plan.t_ave(config.threshold_t);
    let mut report = RunReport::new(config_echo("select-rank", &a.input, &a.sel, a.delta.clone(), seed));
    report.rank_selection = a.delta.iter().map(|&d| select_rank(&eigs, t_ave, d, config.c)).collect();
    report.sample = Some(SampleSummary::new(&panel, &plan));
    Ok(report)
}

fn estimate_cmd(a: &EstimateArgs) -> CliResult<RunReport> {
    check_positive("c", a.sel.c)?;
    check_positive("delta", a.delta)?;
    let (panel, seed) = load_panel(&a.input)?;
    let (panel, exclusions) = match a.min_t {
        Some(k) => {
            let (p, log) = drop_short_units(panel, k)?;
            (p, Some(log))
        }
        None => (panel, None),
    };
    let m = panel.m();
    if let Some(r) = a.rank {
        if r == 0 || r >= m {
            return Err(usage(format!("--rank must satisfy 1 <= rank < m = {m}, got {r}")));
        }
    }
    let mut config = selection_config(&a.sel, a.delta);
    config.rank = a.rank;
    if let Some(names) = &a.normalize_on {
        let pos = names
            .iter()
            .map(|v| {
                panel
                    .variable_names()
                    .iter()
                    .position(|x| x == v)
                    .ok_or_else(|| usage(format!("--normalize-on: no variable named {v:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if pos.is_empty() || pos.len() >= m {
            return Err(usage(format!("--normalize-on needs between 1 and {} variables", m - 1)));
        }
        config.identification = IdentificationScheme::NormalizedOn(pos);
    }
    let r_expected = config.rank.or(config.identification.implied_rank());
    if let Some(s) = &a.null {
        let nulls = parse_matrix(s).map_err(|e| usage(format!("--null: {e}")))?;
        if let Some(r) = r_expected {
            if nulls.shape() != (m - r, r) {
                return Err(usage(format!("--null must be {} x {r}, got {:?}", m - r, nulls.shape())));
            }
        }
        config.null_values = Some(nulls);
    }
    let plan = SubsamplePlan::new(&panel, config.q)?;
    let outcome = estimate(&panel, &config)?;
    let mut echo = config_echo("estimate", &a.input, &a.sel, vec![a.delta], seed);
    echo.rank = a.rank;
    echo.normalize_on = a.normalize_on.clone();
    echo.null_values = config.null_values.as_ref().map(matrix_rows);
    echo.min_t = a.min_t;
    let mut report = RunReport::new(echo);
    report.rank_selection = outcome.selection.into_iter().collect();
    report.diagnostic = outcome.diagnostic;
    report.estimate = outcome
        .estimate
        .as_ref()
        .map(|e| EstimateReport::new(e, panel.variable_names()));
    report.sample = Some(SampleSummary::new(&panel, &plan));
    report.exclusions = exclusions;
    Ok(report)
}

fn simulate_cmd(a: &SimulateArgs) -> CliResult<RunReport> {
    let design = a.design.design()?;
    if a.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    check_positive("c", a.c)?;
    for &d in &a.delta {
        check_positive("delta", d)?;
    }
    if a.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    let mut grid = Vec::new();
    for &n in &a.n {
        for &t in &a.t {
            if n == 0 || t < 4 {
                return Err(usage(format!("cell (n = {n}, T = {t}) needs n >= 1 and T >= 4")));
            }
            grid.push((n, t));
        }
    }
    let mut spec = ExperimentSpec::new(design, 0, 0, a.reps, a.design.seed);
    spec.grid = grid;
    spec.q = a.q;
    spec.deltas = a.delta.clone();
    spec.c = a.c;
    spec.power_shift = a.shift;
    let exp = run_experiment(&spec, a.threads)?;
    let mut report = RunReport::new(ConfigEcho {
        command: "simulate".into(),
        input: None,
        q: a.q,
        deltas: a.delta.clone(),
        c: a.c,
        rank: None,
        normalize_on: None,
        null_values: None,
        scale_for_selection: spec.scale_for_selection,
        threshold_t: spec.threshold_t,
        min_t: None,
        seed: Some(a.design.seed),
    });
    report.experiment = Some(exp);
    Ok(report)
}

fn filter_cmd(a: &FilterArgs) -> CliResult<RunReport> {
    let spec = FilterSpec {
        min_t: a.min_t,
        require_positive: !a.allow_nonpositive,
        log_transform: a.log_transform,
        trim_ratios: a.trim.clone(),
        keep_longest_run: a.keep_longest_run,
    };
    spec.check().map_err(|e| usage(e.to_string()))?;
    let cols = CsvColumns {
        unit: a.unit_col.clone(),
        time: a.time_col.clone(),
        values: a.vars.clone(),
    };
    let records = read_csv_long(&a.input, &cols)?;
    let out = apply_filters(&records, &spec)?;
    let cleaned = RawRecords::from_panel(&out.panel);
    match &a.output {
        Some(p) => write_csv_long(std::fs::File::create(p).map_err(PmeError::from)?, &cleaned)?,
        None if !a.json => write_csv_long(std::io::stdout().lock(), &cleaned)?,
        None => {}
    }
    let log = ExclusionLog {
        counts: out.counts,
        units: out.exclusions,
    };
    if let Some(p) = &a.log {
        let s = serde_json::to_string_pretty(&log).map_err(|e| PmeError::Io(e.to_string()))?;
        std::fs::write(p, s).map_err(PmeError::from)?;
    }
    let plan = SubsamplePlan::new(&out.panel, SubsampleRule::Fixed(2)).ok();
    let mut report = RunReport::new(ConfigEcho {
        command: "filter".into(),
        input: Some(a.input.display().to_string()),
        q: SubsampleRule::Fixed(2),
        deltas: Vec::new(),
        c: 1.0,
        rank: None,
        normalize_on: None,
        null_values: None,
        scale_for_selection: false,
        threshold_t: TimeAverage::Arithmetic,
        min_t: Some(a.min_t),
        seed: None,
    });
    report.sample = plan.map(|p| SampleSummary::new(&out.panel, &p));
    report.exclusions = Some(log);
    Ok(report)
}

fn human_estimate(out: &mut String, r: &RunReport) {
    if let Some(s) = &r.sample {
        write_selection(out, s, &r.rank_selection);
    }
    match r.diagnostic {
        Some(Diagnostic::NoRelations) => {
            let _ = writeln!(out, "no eigenvalue below the threshold: no long-run relations");
        }
        Some(Diagnostic::AllBelowThreshold) => {
            let _ = writeln!(out, "every eigenvalue below the threshold: the data look stationary");
        }
        None => {}
    }
    let Some(e) = &r.estimate else { return };
    let _ = writeln!(out, "relations: {}", e.r);
    let _ = writeln!(out, "identified vectors (columns):");
    for (name, row) in e.variables.iter().zip(&e.b_hat) {
        let _ = writeln!(out, "  {name:<12} {}", fmt_row(row));
    }
    if let (Some(th), Some(se), Some(ts)) = (&e.theta, &e.std_errors, &e.t_stats) {
        let _ = writeln!(out, "{:<14}{:>9} {:>12} {:>10} {:>10}", "coefficient", "relation", "estimate", "s.e.", "t");
        for (k, name) in e.free_variables.iter().enumerate() {
            for j in 0..e.r {
                let _ = writeln!(out, "{:<14}{:>9} {:>12.5} {:>10.5} {:>10.2}", name, j + 1, th[k][j], se[k][j], ts[k][j]);
            }
        }
    }
}

fn human_experiment(out: &mut String, x: &ExperimentReport) {
    let _ = writeln!(out, "true rank {}, generator {}", x.true_rank, x.generator);
    if let Some(k) = x.kappa {
        let _ = writeln!(out, "kappa {k:.5}");
    }
    for c in &x.cells {
        let _ = writeln!(out, "n = {}, T = {}: {} replications, {} failed", c.n, c.t, c.completed, c.failures);
        for s in &c.selection {
            let _ = writeln!(out, "  delta = {:<5} frequencies {}", s.delta, fmt_row(&s.frequencies));
        }
        for k in &c.coefficients {
            let _ = writeln!(
                out,
                "  coef (var {}, rel {}): bias x100 {:.3}  rmse x100 {:.3}  size {:.2}  power {:.2}",
                k.variable + 1,
                k.relation + 1,
                100.0 * k.bias,
                100.0 * k.rmse,
                100.0 * k.size,
                100.0 * k.power
            );
        }
    }
}

fn render(report: &RunReport, json: bool) -> CliResult<String> {
    if json {
        let mut s = report.to_json()?;
        s.push('\n');
        return Ok(s);
    }
    let mut out = String::new();
    match report.config.command.as_str() {
        "select-rank" => {
            if let Some(s) = &report.sample {
                write_selection(&mut out, s, &report.rank_selection);
            }
        }
        "estimate" => human_estimate(&mut out, report),
        "simulate" => {
            if let Some(x) = &report.experiment {
                human_experiment(&mut out, x);
            }
        }
        _ => {
            if let Some(log) = &report.exclusions {
                let c = log.counts;
                let _ = writeln!(
                    out,
                    "units: {} input, {} after filter 1, {} after filter 2, {} after filter 3",
                    c.input, c.after_filter1, c.after_filter2, c.after_filter3
                );
            }
        }
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> CliResult<(RunReport, bool)> {
    Ok(match cli.command {
        Command::SelectRank(a) => (select_rank_cmd(&a)?, a.sel.json),
        Command::Estimate(a) => (estimate_cmd(&a)?, a.sel.json),
        Command::Simulate(a) => (simulate_cmd(&a)?, a.json),
        Command::Filter(a) => (filter_cmd(&a)?, a.json),
    })
}

/// Parses `argv` (including the program name), runs the command and prints to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let filter_to_stdout = matches!(&cli.command, Command::Filter(a) if !a.json && a.output.is_none());
    let result = dispatch(cli).and_then(|(r, json)| {
        if filter_to_stdout {
            // the cleaned CSV owns stdout
            eprint!("{}", render(&r, false)?);
            Ok(String::new())
        } else {
            render(&r, json)
        }
    });
    match result {
        Ok(s) => {
            print!("{s}");
            EXIT_OK
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

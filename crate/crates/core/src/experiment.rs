//! Batch runner: experiment files in, report.json and CSV tables out.
//!
//! A config holds a root seed, an optional output directory and a list of
//! experiments run in order. Exit status is 0 when every configured check
//! passes, 1 when a check fails and 2 when the config is rejected.

use crate::error::{LabError, Result};
use crate::evolution::{Backend, CoefficientPath, EvolutionFamily, FieldPathSpec, RoughPathSpec};
use crate::field::{GridField, LqNorm, SpaceTimeField, TorusGrid};
use crate::quasilinear::{
    self, constants_probe, horizon_recipe, lipschitz_in_data, manufactured_error, quasilinear_solve_with,
    CoefficientLaw, ForcingLaw, HorizonMode, QuasilinearProblem,
};
use crate::rbound::{
    draw_probe, rbound_sample, uniform_bound_check, OperatorFamily, OperatorKind, ProbeShape, SignMode,
};
use crate::rng;
use crate::solver::{
    freezing_audit, freezing_threshold, frozen_path, interpolation_constant, mild_solve, mollify_convergence,
    mr_constant_estimate, mr_constant_sweep, solve_with_initial, uniform_nodes, FreezingSpec, MRProblem,
    NormChoice, ProbeSpec, ScanSpec, SweepSpec,
};
use crate::symbol::EllipticSymbol;
use crate::weights::{ap_constant, power_weight_refinement, BoxGrid, Kernel1D, KernelShape, PowerWeight, SampledWeight};
use crate::Complex64 as C;
use clap::{Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; required when any experiment draws random numbers.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub experiments: Vec<Experiment>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Solve(SolveBlock),
    MrScan(ScanBlock),
    Weights(WeightsBlock),
    Rbound(RboundBlock),
    Quasilinear(QuasiBlock),
    Audit(AuditBlock),
}

impl Experiment {
    pub fn name(&self) -> &str {
        match self {
            Experiment::Solve(b) => &b.name,
            Experiment::MrScan(b) => &b.name,
            Experiment::Weights(b) => &b.name,
            Experiment::Rbound(b) => &b.name,
            Experiment::Quasilinear(b) => &b.name,
            Experiment::Audit(b) => &b.name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Solve(_) => "solve",
            Experiment::MrScan(_) => "mr-scan",
            Experiment::Weights(_) => "weights",
            Experiment::Rbound(_) => "rbound",
            Experiment::Quasilinear(_) => "quasilinear",
            Experiment::Audit(_) => "audit",
        }
    }

    fn randomized(&self) -> bool {
        !matches!(self, Experiment::Solve(_) | Experiment::Weights(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one_usize")]
    pub dim: usize,
    pub n: usize,
}

impl GridConfig {
    fn build(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, self.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathConfig {
    /// c·|ξ|^order on [start, end] with c = re + i·im.
    Laplacian {
        #[serde(default = "two_u32")]
        order: u32,
        #[serde(default = "one_f64")]
        re: f64,
        #[serde(default)]
        im: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "one_f64")]
        end: f64,
    },
    Rough {
        spec: RoughPathSpec,
    },
    Field {
        spec: FieldPathSpec,
    },
    Explicit {
        path: CoefficientPath,
    },
}

impl PathConfig {
    /// Path number `index` drawn from `seed` (deterministic kinds ignore both).
    fn build(&self, grid: TorusGrid, seed: u64, index: u64) -> Result<CoefficientPath> {
        match self {
            PathConfig::Laplacian { order, re, im, start, end } => {
                let sym = EllipticSymbol::laplacian_power(grid.dim(), *order, C::new(*re, *im))?;
                CoefficientPath::constant(sym, *start, *end)
            }
            PathConfig::Rough { spec } => CoefficientPath::rough(spec, seed, index),
            PathConfig::Field { spec } => CoefficientPath::rough_field(spec, grid, seed, index),
            PathConfig::Explicit { path } => Ok(path.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    Zero,
    /// amp·e^{ik·x}, amp = re + i·im.
    Mode {
        k: Vec<i64>,
        #[serde(default = "one_f64")]
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// amp·Π sin x_j.
    Sines {
        #[serde(default = "one_f64")]
        amp: f64,
    },
}

impl FieldConfig {
    fn build(&self, grid: TorusGrid) -> Result<GridField> {
        match self {
            FieldConfig::Zero => Ok(GridField::zeros(grid)),
            FieldConfig::Mode { k, re, im } => GridField::mode(grid, k, C::new(*re, *im)),
            FieldConfig::Sines { amp } => {
                Ok(GridField::from_fn(grid, |x| C::new(amp * x.iter().map(|v| v.sin()).product::<f64>(), 0.0)))
            }
        }
    }
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn two_f64() -> f64 {
    2.0
}

fn two_u32() -> u32 {
    2
}

fn quarter() -> f64 {
    0.25
}

fn mode_backend() -> Backend {
    Backend::ModeDiagonal
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeCheck {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    pub name: String,
    pub grid: GridConfig,
    pub path: PathConfig,
    #[serde(default = "mode_backend")]
    pub backend: Backend,
    #[serde(default = "quarter")]
    pub delta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "two_f64")]
    pub p: f64,
    #[serde(default = "two_f64")]
    pub q: f64,
    #[serde(default)]
    pub time_weight: Option<PowerWeight>,
    pub steps: usize,
    /// Time-constant forcing.
    pub forcing: FieldConfig,
    #[serde(default)]
    pub initial: Option<FieldConfig>,
    #[serde(default)]
    pub residual_tolerance: Option<f64>,
    /// Expected Fourier coefficient of u at the final time.
    #[serde(default)]
    pub expect: Option<AmplitudeCheck>,
    /// Write the final field in the binary layout.
    #[serde(default)]
    pub dump_final: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadCheck {
    /// Window [λ₀, factor·λ₀] starting at the smallest scanned λ.
    pub factor: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub name: String,
    pub grid: GridConfig,
    pub path: PathConfig,
    /// Number of seeded paths (random path kinds only).
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default = "mode_backend")]
    pub backend: Backend,
    #[serde(default = "quarter")]
    pub delta: f64,
    pub lambdas: Vec<f64>,
    pub norms: Vec<NormChoice>,
    pub steps: usize,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub spread: Option<SpreadCheck>,
    /// Largest allowed max/min of sup Ĉ across paths, per norm.
    #[serde(default)]
    pub path_spread: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    pub name: String,
    pub p: f64,
    /// Power weights t^α on [0, 1] swept over 2^level cells.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub levels: Vec<u32>,
    #[serde(default)]
    pub kernels: Vec<Kernel1D>,
    /// Check that the bounded/unbounded split matches α ∈ (−1, p − 1).
    #[serde(default = "yes")]
    pub dichotomy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RboundBlock {
    pub name: String,
    pub grid: GridConfig,
    pub family: OperatorKind,
    #[serde(default)]
    pub kernels: Vec<Kernel1D>,
    /// Needed by evolution families.
    #[serde(default)]
    pub path: Option<PathConfig>,
    #[serde(default = "quarter")]
    pub delta: f64,
    pub cells: usize,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one_f64")]
    pub end: f64,
    #[serde(default = "two_f64")]
    pub p: f64,
    #[serde(default = "two_f64")]
    pub q: f64,
    #[serde(default)]
    pub time_weight: Option<PowerWeight>,
    /// Operators per draw.
    pub n: Vec<usize>,
    pub draws: usize,
    pub signs: SignMode,
    #[serde(default = "random_shape")]
    pub probe: ProbeShape,
    /// Also enumerate all sign patterns for N ≤ 10 and compare.
    #[serde(default)]
    pub compare_exhaustive: bool,
    #[serde(default = "eight")]
    pub uniform_probes: usize,
    /// R̂ ≤ factor × measured uniform bound.
    #[serde(default)]
    pub envelope: Option<f64>,
}

fn random_shape() -> ProbeShape {
    ProbeShape::Random
}

fn eight() -> usize {
    8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    pub perturbations: usize,
    pub size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiBlock {
    pub name: String,
    pub grid: GridConfig,
    pub p: f64,
    pub q: f64,
    pub coefficient: CoefficientLaw,
    pub forcing: ForcingLaw,
    #[serde(default = "sines")]
    pub initial: FieldConfig,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "recipe_mode")]
    pub mode: HorizonMode,
    #[serde(default = "sixteen")]
    pub probes: usize,
    #[serde(default = "tight")]
    pub tolerance: f64,
    #[serde(default = "fifty")]
    pub max_iter: usize,
    #[serde(default)]
    pub max_manufactured_error: Option<f64>,
    #[serde(default)]
    pub lipschitz: Option<LipschitzConfig>,
}

fn sines() -> FieldConfig {
    FieldConfig::Sines { amp: 1.0 }
}

fn recipe_mode() -> HorizonMode {
    HorizonMode::Recipe
}

fn sixteen() -> usize {
    16
}

fn tight() -> f64 {
    1e-10
}

fn fifty() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditBlock {
    pub name: String,
    pub checks: Vec<AuditCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AuditCheck {
    /// S(t,r)S(r,s) = S(t,s) and S(s,s) = I on random triples.
    Cocycle {
        grid: GridConfig,
        path: PathConfig,
        #[serde(default = "one_usize")]
        paths: usize,
        #[serde(default = "mode_backend")]
        backend: Backend,
        #[serde(default = "quarter")]
        delta: f64,
        triples: usize,
        #[serde(default)]
        aligned: bool,
        max_defect: f64,
    },
    /// S = e^{−½ΔtA₀} T e^{−½ΔtA₀} per mode.
    Factorization {
        grid: GridConfig,
        path: PathConfig,
        #[serde(default = "one_usize")]
        paths: usize,
        #[serde(default = "quarter")]
        delta: f64,
        pairs: usize,
        max_defect: f64,
    },
    Interpolation {
        grid: GridConfig,
        orders: Vec<u32>,
        q: f64,
        fields: usize,
        lambdas: Vec<f64>,
    },
    Freezing {
        grid: GridConfig,
        path: FieldPathSpec,
        #[serde(default = "one_usize")]
        paths: usize,
        lambda: f64,
        #[serde(default = "two_f64")]
        p: f64,
        #[serde(default = "two_f64")]
        q: f64,
        steps: usize,
        #[serde(default = "sixteen")]
        probes: usize,
        #[serde(default)]
        scan_probes: ProbeSpec,
    },
    Mollify {
        grid: GridConfig,
        path: PathConfig,
        #[serde(default = "one_usize")]
        paths: usize,
        #[serde(default = "quarter")]
        delta: f64,
        lambda: f64,
        #[serde(default = "two_f64")]
        p: f64,
        #[serde(default = "two_f64")]
        q: f64,
        steps: usize,
        forcing: FieldConfig,
        widths: Vec<f64>,
        #[serde(default)]
        scan_probes: ProbeSpec,
    },
}

/// One configured assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// A CSV table; cells are already formatted.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub kind: &'static str,
    pub checks: Vec<Check>,
    pub report: Value,
    pub tables: Vec<Table>,
    pub dumps: Vec<(String, GridField)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub outcomes: Vec<Outcome>,
    pub seed: Option<u64>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed())
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .flat_map(|o| o.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}/{}", o.name, c.name)))
            .collect()
    }
}

/// Parses TOML, or JSON when the text starts with `{` or the path ends in
/// `.json`.
pub fn parse_config(text: &str, path: Option<&Path>) -> Result<ExperimentConfig> {
    let json_like = path.and_then(|p| p.extension()).is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if json_like {
        Ok(serde_json::from_str(text)?)
    } else {
        toml::from_str(text).map_err(|e| LabError::Input(format!("config: {e}")))
    }
}

/// Checks that need no computation.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let bad = |m: String| Err(LabError::Input(m));
    if cfg.experiments.is_empty() {
        return bad("config lists no experiments".into());
    }
    if cfg.seed.is_none() {
        if let Some(e) = cfg.experiments.iter().find(|e| e.randomized()) {
            return bad(format!("experiment '{}' is randomized and needs a seed", e.name()));
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for e in &cfg.experiments {
        let name = e.name();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad(format!("experiment name '{name}' must be non-empty [A-Za-z0-9_-]"));
        }
        if !names.insert(name.to_string()) {
            return bad(format!("duplicate experiment name '{name}'"));
        }
        match e {
            Experiment::MrScan(b) => {
                if b.lambdas.is_empty() {
                    return bad(format!("{name}: empty λ sweep"));
                }
                if b.norms.is_empty() {
                    return bad(format!("{name}: empty norm list"));
                }
                if b.paths == 0 {
                    return bad(format!("{name}: paths must be ≥ 1"));
                }
            }
            Experiment::Weights(b) => {
                if b.alphas.is_empty() && b.kernels.is_empty() {
                    return bad(format!("{name}: nothing to sweep"));
                }
                if !b.alphas.is_empty() && b.levels.len() < 3 {
                    return bad(format!("{name}: refinement sweep needs at least three levels"));
                }
            }
            Experiment::Rbound(b) => {
                if b.n.is_empty() || b.n.contains(&0) {
                    return bad(format!("{name}: N list must be non-empty with N ≥ 1"));
                }
            }
            Experiment::Audit(b) => {
                if b.checks.is_empty() {
                    return bad(format!("{name}: empty check list"));
                }
                for c in &b.checks {
                    match c {
                        AuditCheck::Interpolation { lambdas, orders, .. } if lambdas.is_empty() || orders.is_empty() => {
                            return bad(format!("{name}: empty interpolation sweep"));
                        }
                        AuditCheck::Mollify { widths, .. } if widths.is_empty() => {
                            return bad(format!("{name}: empty mollification sweep"));
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn family(grid: TorusGrid, path: CoefficientPath, backend: Backend, delta: f64) -> Result<Arc<EvolutionFamily>> {
    let fam = EvolutionFamily::new(grid, path, backend, delta)?;
    fam.parabolic()?;
    Ok(Arc::new(fam))
}

/// Runs every experiment in order. `seed` overrides the config seed.
pub fn run_config(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<RunOutput> {
    let mut cfg = cfg.clone();
    if seed.is_some() {
        cfg.seed = seed;
    }
    validate(&cfg)?;
    let root = cfg.seed.unwrap_or(0);
    let mut outcomes = Vec::with_capacity(cfg.experiments.len());
    for (i, e) in cfg.experiments.iter().enumerate() {
        let s = rng::child_seed(root, rng::tag::EXPERIMENT, i as u64);
        outcomes.push(run_experiment(e, s)?);
    }
    Ok(RunOutput { outcomes, seed: cfg.seed })
}

pub fn run_experiment(e: &Experiment, seed: u64) -> Result<Outcome> {
    let mut out = match e {
        Experiment::Solve(b) => run_solve(b)?,
        Experiment::MrScan(b) => run_scan(b, seed)?,
        Experiment::Weights(b) => run_weights(b)?,
        Experiment::Rbound(b) => run_rbound(b, seed)?,
        Experiment::Quasilinear(b) => run_quasi(b, seed)?,
        Experiment::Audit(b) => run_audit(b, seed)?,
    };
    out.report["seed"] = json!(seed);
    Ok(out)
}

fn outcome(name: &str, kind: &'static str) -> Outcome {
    Outcome { name: name.to_string(), kind, checks: Vec::new(), report: json!({}), tables: Vec::new(), dumps: Vec::new() }
}

fn run_solve(b: &SolveBlock) -> Result<Outcome> {
    let mut o = outcome(&b.name, "solve");
    let grid = b.grid.build()?;
    let path = b.path.build(grid, 0, 0)?;
    let times = uniform_nodes(path.start(), path.end(), b.steps);
    let fam = family(grid, path, b.backend, b.delta)?;
    let f = b.forcing.build(grid)?;
    let forcing = SpaceTimeField::new(times.clone(), vec![f; times.len()])?;
    let mut prob = MRProblem::new(fam, b.lambda, forcing, b.p, b.q)?;
    if let Some(v) = b.time_weight {
        prob = prob.with_time_weight(v)?;
    }
    if let Some(t) = b.residual_tolerance {
        prob = prob.with_tolerance(t);
    }
    let rep = match &b.initial {
        Some(x) => solve_with_initial(&prob.with_initial(x.build(grid)?)?)?,
        None => mild_solve(&prob)?,
    };
    o.checks.push(Check::new(
        "residual",
        rep.passed,
        format!("residual {:e} vs tolerance {:e}", rep.residual, rep.residual_tolerance),
    ));
    let sol = rep.solution();
    let last = sol.last().clone();
    if let Some(x) = &b.expect {
        let idx = grid.index_of(&x.k)?;
        let got = last.coeffs()[idx];
        let want = C::new(x.re, x.im);
        let rel = (got - want).norm() / want.norm().max(f64::MIN_POSITIVE);
        o.checks.push(Check::new(
            "amplitude",
            rel <= x.rel_tol,
            format!("coefficient {got} vs {want}, relative error {rel:e}"),
        ));
        o.report["amplitude"] = json!({"re": got.re, "im": got.im, "relative_error": rel});
    }
    let lq = LqNorm::new(grid, b.q, None)?;
    let mut t = Table::new(format!("{}_nodes.csv", b.name), &["t", "lq_norm", "max_abs"]);
    for (time, s) in sol.times().iter().zip(sol.slices()) {
        t.push(vec![num(*time), num(lq.norm(s.values())), num(s.max_abs())]);
    }
    o.tables.push(t);
    if b.dump_final {
        o.dumps.push((format!("{}_final.bin", b.name), last));
    }
    o.report["summary"] = serde_json::to_value(rep.summary())?;
    Ok(o)
}

fn run_scan(b: &ScanBlock, seed: u64) -> Result<Outcome> {
    let mut o = outcome(&b.name, "mr-scan");
    let grid = b.grid.build()?;
    let deterministic = matches!(b.path, PathConfig::Laplacian { .. } | PathConfig::Explicit { .. });
    if deterministic && b.paths != 1 {
        return Err(LabError::Input(format!("{}: deterministic paths take paths = 1", b.name)));
    }
    let path_seed = rng::child_seed(seed, rng::tag::PATH, 0);
    let probe_seed = rng::child_seed(seed, rng::tag::PROBE, 0);
    let mut t = Table::new(
        format!("{}_constants.csv", b.name),
        &[
            "path", "p", "q", "alpha", "lambda", "c_hat", "a0_ratio", "u_prime_ratio", "lambda_u_ratio",
            "worst_probe", "worst_kind", "max_residual",
        ],
    );
    // sups[norm][path]
    let mut sups = vec![Vec::new(); b.norms.len()];
    let mut worst_spread: f64 = 0.0;
    let mut residuals_ok = true;
    let mut finite = true;
    let mut reports = Vec::new();
    for pi in 0..b.paths {
        let path = b.path.build(grid, path_seed, pi as u64)?;
        let (start, end) = (path.start(), path.end());
        let fam = family(grid, path, b.backend, b.delta)?;
        let spec = SweepSpec {
            lambdas: b.lambdas.clone(),
            norms: b.norms.clone(),
            space_weight: None,
            start,
            end,
            steps: b.steps,
            probes: b.probes.clone(),
            seed: probe_seed,
        };
        let tables = mr_constant_sweep(&fam, &spec)?;
        for (ni, (norm, tab)) in b.norms.iter().zip(&tables).enumerate() {
            let alpha = norm.time_weight.map_or(0.0, |v| v.exponent);
            for r in &tab.rows {
                finite &= r.c_hat.is_finite();
                residuals_ok &= r.residuals_ok;
                t.push(vec![
                    pi.to_string(),
                    num(norm.p),
                    num(norm.q),
                    num(alpha),
                    num(r.lambda),
                    num(r.c_hat),
                    num(r.a0_ratio),
                    num(r.u_prime_ratio),
                    num(r.lambda_u_ratio),
                    r.worst_probe.to_string(),
                    serde_json::to_value(r.worst_kind)?.as_str().unwrap_or("").to_string(),
                    num(r.max_residual),
                ]);
            }
            sups[ni].push(tab.sup);
            if let Some(s) = b.spread {
                let lo = b.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
                worst_spread = worst_spread.max(tab.relative_spread(lo, s.factor * lo));
            }
        }
        reports.push(serde_json::to_value(&tables)?);
    }
    o.checks.push(Check::new("finite", finite, "every Ĉ(λ) is finite"));
    o.checks.push(Check::new("residuals", residuals_ok, "every probe solve met its residual tolerance"));
    if let Some(s) = b.spread {
        o.checks.push(Check::new(
            "lambda-spread",
            worst_spread < s.max,
            format!("largest relative spread over [λ₀, {}λ₀] is {worst_spread:.4} (limit {})", s.factor, s.max),
        ));
    }
    let ratios: Vec<f64> = sups
        .iter()
        .map(|v| {
            let hi = v.iter().copied().fold(0.0, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        })
        .collect();
    if let Some(limit) = b.path_spread {
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        o.checks.push(Check::new(
            "path-spread",
            worst < limit,
            format!("largest max/min of sup Ĉ across paths is {worst:.4} (limit {limit})"),
        ));
    }
    o.report["tables"] = Value::Array(reports);
    o.report["lambda_spread"] = json!(worst_spread);
    o.report["path_spread"] = json!(ratios);
    o.tables.push(t);
    Ok(o)
}

fn run_weights(b: &WeightsBlock) -> Result<Outcome> {
    let mut o = outcome(&b.name, "weights");
    if !b.alphas.is_empty() {
        let mut t = Table::new(format!("{}_ap.csv", b.name), &["alpha", "cells", "ap_constant"]);
        let mut sweeps = Vec::new();
        let mut split_ok = true;
        for &a in &b.alphas {
            let s = power_weight_refinement(a, b.p, &b.levels)?;
            for (c, v) in s.cells.iter().zip(&s.constants) {
                t.push(vec![num(a), c.to_string(), num(*v)]);
            }
            let inside = PowerWeight::new(a, 0.0).is_ap(b.p);
            split_ok &= s.bounded == inside;
            sweeps.push(s);
        }
        let finest = *b.levels.last().expect("validated");
        let g = BoxGrid::line(0.0, 1.0, 1 << finest)?;
        let c = ap_constant(&SampledWeight::constant(g, 3.7)?, b.p, None)?;
        o.checks.push(Check::new("constant-weight", c == 1.0, format!("[3.7]_{{A_p}} = {c}")));
        if b.dichotomy {
            o.checks.push(Check::new(
                "dichotomy",
                split_ok,
                "refinement behaviour matches α ∈ (−1, p − 1) for every α",
            ));
        }
        o.report["refinement"] = serde_json::to_value(&sweeps)?;
        o.tables.push(t);
    }
    if !b.kernels.is_empty() {
        let mut t = Table::new(format!("{}_kernels.csv", b.name), &["kernel", "scale", "damping", "class_constant"]);
        let mut ok = true;
        let mut vals = Vec::new();
        for k in &b.kernels {
            let c = k.class_constant()?;
            if !matches!(k.shape, KernelShape::Poisson { .. }) {
                ok &= c <= 1.0 + 1e-6;
            }
            let label = serde_json::to_value(k)?["shape"].as_str().unwrap_or("").to_string();
            t.push(vec![label, num(k.scale), num(k.damping), num(c)]);
            vals.push(c);
        }
        o.checks.push(Check::new("kernel-class", ok, "every monotone kernel has class constant ≤ 1 + 1e-6"));
        o.report["class_constants"] = json!(vals);
        o.tables.push(t);
    }
    Ok(o)
}

fn run_rbound(b: &RboundBlock, seed: u64) -> Result<Outcome> {
    let mut o = outcome(&b.name, "rbound");
    let grid = b.grid.build()?;
    let fam_seed = rng::child_seed(seed, rng::tag::OPERATOR, 0);
    let mut fam = OperatorFamily::new(
        b.family,
        b.kernels.clone(),
        grid,
        b.start,
        b.end,
        b.cells,
        b.p,
        b.q,
        b.time_weight,
        fam_seed,
    )?;
    if let OperatorKind::Evolution = b.family {
        let pc = b.path.as_ref().ok_or_else(|| LabError::Input(format!("{}: evolution family needs a path", b.name)))?;
        let path = pc.build(grid, rng::child_seed(seed, rng::tag::PATH, 0), 0)?;
        fam = fam.with_evolution(family(grid, path, Backend::ModeDiagonal, b.delta)?)?;
    }
    let sample_seed = rng::child_seed(seed, rng::tag::SIGN, 0);
    let probes: Vec<SpaceTimeField> = (0..b.uniform_probes)
        .map(|i| draw_probe(&fam, b.probe, rng::child_seed(seed, rng::tag::PROBE, 0), i as u64))
        .collect::<Result<_>>()?;
    let uniform = uniform_bound_check(&fam, &probes)?;
    o.checks.push(Check::new(
        "uniform-contract",
        uniform.within,
        format!(
            "uniform bound {:.6} vs ‖T‖∞·maximal {:.6}",
            uniform.bound,
            uniform.operator_sup * uniform.maximal
        ),
    ));
    let mut summary = Table::new(
        format!("{}_rbound.csv", b.name),
        &["n", "signs", "patterns", "estimate", "envelope", "single_max", "band_lo", "band_hi", "kahane"],
    );
    let mut draws = Table::new(format!("{}_draws.csv", b.name), &["n", "signs", "draw", "ratio"]);
    let mut estimates = Vec::new();
    let label = |s: SignMode| match s {
        SignMode::Exhaustive => "exhaustive".to_string(),
        SignMode::MonteCarlo { samples } => format!("monte-carlo-{samples}"),
    };
    let mut agree = true;
    let mut worst_gap: f64 = 0.0;
    let mut best: f64 = 0.0;
    for &n in &b.n {
        let mut modes = vec![b.signs];
        if b.compare_exhaustive && n <= 10 && b.signs != SignMode::Exhaustive {
            modes.push(SignMode::Exhaustive);
        }
        let mut got = Vec::new();
        for m in modes {
            let e = rbound_sample(&fam, n, b.draws, b.probe, m, sample_seed)?;
            summary.push(vec![
                n.to_string(),
                label(m),
                e.patterns.to_string(),
                num(e.estimate),
                num(e.envelope),
                num(e.single_max),
                num(e.band.0),
                num(e.band.1),
                num(e.kahane_factor),
            ]);
            for (d, r) in e.per_draw.iter().enumerate() {
                draws.push(vec![n.to_string(), label(m), d.to_string(), num(*r)]);
            }
            best = best.max(e.estimate);
            got.push(e);
        }
        if got.len() == 2 {
            for (x, y) in [(got[0].estimate, got[1].estimate), (got[0].band.1, got[1].band.1)] {
                let gap = (x - y).abs() / y.max(f64::MIN_POSITIVE);
                worst_gap = worst_gap.max(gap);
                agree &= gap <= 0.05;
            }
        }
        estimates.extend(got);
    }
    o.checks.push(Check::new("finite", best.is_finite(), format!("largest R̂ {best}")));
    if b.compare_exhaustive {
        o.checks.push(Check::new(
            "exhaustive-agreement",
            agree,
            format!("largest Monte-Carlo vs exhaustive gap {:.4}", worst_gap),
        ));
    }
    if let Some(f) = b.envelope {
        o.checks.push(Check::new(
            "uniform-envelope",
            best <= f * uniform.bound,
            format!("R̂ {best:.6} vs {f} × uniform bound {:.6}", uniform.bound),
        ));
    }
    if let OperatorKind::Diagonal { .. } = b.family {
        if b.p == 2.0 && b.q == 2.0 && b.time_weight.is_none() {
            let sup = fam.diagonal_sup();
            let rel = (best - sup).abs() / sup.max(f64::MIN_POSITIVE);
            o.checks.push(Check::new(
                "diagonal-exact",
                rel <= 0.1,
                format!("R̂ {best:.6} vs sup of multiplier norms {sup:.6}"),
            ));
        }
    }
    o.report["uniform"] = serde_json::to_value(&uniform)?;
    o.report["estimates"] = serde_json::to_value(&estimates)?;
    o.tables.push(summary);
    o.tables.push(draws);
    Ok(o)
}

fn run_quasi(b: &QuasiBlock, seed: u64) -> Result<Outcome> {
    let mut o = outcome(&b.name, "quasilinear");
    let grid = b.grid.build()?;
    let u0 = b.initial.build(grid)?;
    let prob = QuasilinearProblem::new(grid, b.p, b.q, b.coefficient, b.forcing, u0, b.horizon, b.steps)?
        .with_mode(b.mode)
        .with_iteration(b.tolerance, b.max_iter)
        .with_probes(b.probes, rng::child_seed(seed, rng::tag::PROBE, 0));
    let c = constants_probe(&prob)?;
    let recipe = horizon_recipe(&prob, &c)?;
    let (rep, trace) = quasilinear_solve_with(&prob, &c, &recipe)?;
    o.checks.push(Check::new(
        "converged",
        trace.converged,
        format!("{} iterations on horizon {:e}", trace.iterations, trace.horizon),
    ));
    let late: f64 = trace.ratios.iter().skip(1).copied().fold(0.0, f64::max);
    let contraction = trace.contraction_after_entry.unwrap_or(late);
    o.checks.push(Check::new(
        "contraction",
        contraction <= 0.5,
        format!("increment ratio {contraction:.4} after entry or from the second iteration on"),
    ));
    if let (ForcingLaw::Manufactured, Some(tol)) = (b.forcing, b.max_manufactured_error) {
        let err = manufactured_error(&prob, &rep)?;
        o.checks.push(Check::new("manufactured", err <= tol, format!("‖u − u*‖_MR = {err:e} (limit {tol:e})")));
        o.report["manufactured_error"] = json!(err);
    }
    if let Some(l) = b.lipschitz {
        let lip = lipschitz_in_data(&prob, &c, &recipe, l.perturbations, l.size)?;
        o.checks.push(Check::new(
            "lipschitz",
            lip.stable && lip.within_bound,
            format!("ratios in [{:.4}, {:.4}], bound {:.4}", lip.min, lip.max, lip.bound),
        ));
        o.report["lipschitz"] = serde_json::to_value(&lip)?;
    }
    let mut t = Table::new(format!("{}_iterations.csv", b.name), &["iteration", "increment", "ratio", "distance"]);
    for (k, inc) in trace.increments.iter().enumerate() {
        let ratio = if k == 0 { String::new() } else { num(trace.ratios[k - 1]) };
        let dist = trace.distances.get(k + 1).copied().map(num).unwrap_or_default();
        t.push(vec![(k + 1).to_string(), num(*inc), ratio, dist]);
    }
    o.tables.push(t);
    o.report["trace"] = serde_json::to_value(&trace)?;
    o.report["summary"] = serde_json::to_value(rep.summary())?;
    Ok(o)
}

fn random_fields(grid: TorusGrid, count: usize, seed: u64) -> Vec<GridField> {
    let half = grid.n() as f64 / 2.0;
    (0..count)
        .map(|i| {
            let mut g = rng::stream(seed, rng::tag::FIELD, i as u64);
            let band = g.random_range(1.0..=half);
            let decay = g.random_range(0.0..3.0);
            let coeffs = grid
                .frequencies()
                .iter()
                .map(|xi| {
                    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if xi.iter().all(|v| v.abs() <= band) {
                        let re: f64 = g.sample(StandardNormal);
                        let im: f64 = g.sample(StandardNormal);
                        C::new(re, im) / (1.0 + r).powf(decay)
                    } else {
                        C::new(0.0, 0.0)
                    }
                })
                .collect();
            GridField::from_coeffs(grid, coeffs)
        })
        .collect()
}

fn run_audit(b: &AuditBlock, seed: u64) -> Result<Outcome> {
    let mut o = outcome(&b.name, "audit");
    let mut reports = Vec::new();
    for (ci, check) in b.checks.iter().enumerate() {
        let s = rng::child_seed(seed, rng::tag::EXPERIMENT, ci as u64);
        let path_seed = rng::child_seed(s, rng::tag::PATH, 0);
        match check {
            AuditCheck::Cocycle { grid, path, paths, backend, delta, triples, aligned, max_defect } => {
                let grid = grid.build()?;
                let mut t = Table::new(
                    format!("{}_cocycle_{ci}.csv", b.name),
                    &["path", "cocycle_defect", "identity_defect", "max_norm", "growth_omega"],
                );
                let mut worst: f64 = 0.0;
                for pi in 0..*paths {
                    let p = path.build(grid, path_seed, pi as u64)?;
                    let tr = crate::evolution::random_triples(&p, *triples, *aligned, rng::child_seed(s, rng::tag::TRIPLE, pi as u64));
                    let fam = family(grid, p, *backend, *delta)?;
                    let r = fam.family_audit(&tr)?;
                    worst = worst.max(r.max_cocycle_defect).max(r.max_identity_defect);
                    t.push(vec![
                        pi.to_string(),
                        num(r.max_cocycle_defect),
                        num(r.max_identity_defect),
                        num(r.max_norm),
                        num(r.growth_omega),
                    ]);
                }
                o.checks.push(Check::new(
                    format!("cocycle-{ci}"),
                    worst <= *max_defect,
                    format!("largest defect {worst:e} (limit {max_defect:e})"),
                ));
                reports.push(json!({"check": "cocycle", "worst": worst}));
                o.tables.push(t);
            }
            AuditCheck::Factorization { grid, path, paths, delta, pairs, max_defect } => {
                let grid = grid.build()?;
                let mut worst: f64 = 0.0;
                for pi in 0..*paths {
                    let p = path.build(grid, path_seed, pi as u64)?;
                    let (a, bnd) = (p.start(), p.end());
                    let fam = family(grid, p, Backend::ModeDiagonal, *delta)?;
                    let mut g = rng::stream(s, rng::tag::TRIPLE, pi as u64);
                    for _ in 0..*pairs {
                        let x = a + (bnd - a) * g.random::<f64>();
                        let y = a + (bnd - a) * g.random::<f64>();
                        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                        let f = fam.factorize(lo, hi)?;
                        let sm = fam.mode_multiplier(lo, hi)?;
                        let d = f.compose().iter().zip(&sm).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
                        worst = worst.max(d);
                    }
                }
                o.checks.push(Check::new(
                    format!("factorization-{ci}"),
                    worst <= *max_defect,
                    format!("largest per-mode defect {worst:e} (limit {max_defect:e})"),
                ));
                reports.push(json!({"check": "factorization", "worst": worst}));
            }
            AuditCheck::Interpolation { grid, orders, q, fields, lambdas } => {
                let grid = grid.build()?;
                let fs = random_fields(grid, *fields, s);
                let mut t = Table::new(format!("{}_interpolation_{ci}.csv", b.name), &["m", "lambda", "ratio"]);
                let mut ok = true;
                let mut reps = Vec::new();
                for &m in orders {
                    let r = interpolation_constant(&fs, m, *q, lambdas)?;
                    for (l, v) in &r.per_lambda {
                        t.push(vec![m.to_string(), num(*l), num(*v)]);
                    }
                    ok &= r.constant.is_finite() && r.constant > 0.0;
                    reps.push(r);
                }
                o.checks.push(Check::new(
                    format!("interpolation-{ci}"),
                    ok,
                    "one finite constant covers every field, β and λ̃",
                ));
                reports.push(json!({"check": "interpolation", "reports": serde_json::to_value(&reps)?}));
                o.tables.push(t);
            }
            AuditCheck::Freezing { grid, path, paths, lambda, p, q, steps, probes, scan_probes } => {
                let grid = grid.build()?;
                let mut t = Table::new(
                    format!("{}_freezing_{ci}.csv", b.name),
                    &["path", "radius", "c_hat", "worst_ratio", "oscillation"],
                );
                let mut ok = true;
                for pi in 0..*paths {
                    let fp = CoefficientPath::rough_field(path, grid, path_seed, pi as u64)?;
                    let mut g = rng::stream(s, rng::tag::FIELD, pi as u64);
                    let x0: Vec<f64> =
                        (0..grid.dim()).map(|_| 2.0 * std::f64::consts::PI * g.random::<f64>()).collect();
                    let frozen = frozen_path(&fp, &x0)?;
                    let ffam = family(grid, frozen, Backend::ModeDiagonal, 0.25)?;
                    let scan = ScanSpec {
                        lambdas: vec![*lambda],
                        p: *p,
                        q: *q,
                        time_weight: None,
                        space_weight: None,
                        start: fp.start(),
                        end: fp.end(),
                        steps: *steps,
                        probes: scan_probes.clone(),
                        seed: rng::child_seed(s, rng::tag::PROBE, pi as u64),
                    };
                    let c_hat = mr_constant_estimate(&ffam, &scan)?.sup;
                    let radius = freezing_threshold(&fp, &x0, c_hat);
                    let fam = family(grid, fp.clone(), Backend::Dense, 0.25)?;
                    let spec = FreezingSpec {
                        x0,
                        radius,
                        lambda: *lambda,
                        p: *p,
                        q: *q,
                        start: fp.start(),
                        end: fp.end(),
                        steps: *steps,
                        probes: *probes,
                        omega_max: 10.0,
                        seed: rng::child_seed(s, rng::tag::FIELD, 1000 + pi as u64),
                    };
                    let r = freezing_audit(&fam, &spec, c_hat)?;
                    ok &= r.pass && r.below_threshold;
                    t.push(vec![pi.to_string(), num(radius), num(c_hat), num(r.worst_ratio), num(r.oscillation)]);
                }
                o.checks.push(Check::new(format!("freezing-{ci}"), ok, "ratio ≤ 2Ĉ below the oscillation threshold"));
                reports.push(json!({"check": "freezing"}));
                o.tables.push(t);
            }
            AuditCheck::Mollify { grid, path, paths, delta, lambda, p, q, steps, forcing, widths, scan_probes } => {
                let grid = grid.build()?;
                let mut t = Table::new(
                    format!("{}_mollify_{ci}.csv", b.name),
                    &["path", "width", "error", "commutator", "ratio"],
                );
                let mut ok = true;
                let mut detail = String::new();
                for pi in 0..*paths {
                    let pth = path.build(grid, path_seed, pi as u64)?;
                    let times = uniform_nodes(pth.start(), pth.end(), *steps);
                    let (start, end) = (pth.start(), pth.end());
                    let fam = family(grid, pth, Backend::ModeDiagonal, *delta)?;
                    let f = forcing.build(grid)?;
                    let prob = MRProblem::new(
                        fam.clone(),
                        *lambda,
                        SpaceTimeField::new(times.clone(), vec![f; times.len()])?,
                        *p,
                        *q,
                    )?;
                    let scan = ScanSpec {
                        lambdas: vec![*lambda],
                        p: *p,
                        q: *q,
                        time_weight: None,
                        space_weight: None,
                        start,
                        end,
                        steps: *steps,
                        probes: scan_probes.clone(),
                        seed: rng::child_seed(s, rng::tag::PROBE, pi as u64),
                    };
                    let c_hat = mr_constant_estimate(&fam, &scan)?.sup;
                    let r = mollify_convergence(&prob, widths)?;
                    for row in &r.rows {
                        t.push(vec![pi.to_string(), num(row.width), num(row.error), num(row.commutator), num(row.ratio)]);
                    }
                    let good = r.monotone_tail && r.max_ratio <= 2.0 * c_hat;
                    if !good && detail.is_empty() {
                        detail = format!(
                            "path {pi}: monotone tail {}, ratio {:.4} vs 2Ĉ {:.4}",
                            r.monotone_tail,
                            r.max_ratio,
                            2.0 * c_hat
                        );
                    }
                    ok &= good;
                }
                o.checks.push(Check::new(
                    format!("mollify-{ci}"),
                    ok,
                    if ok { "tail decreases and ratios stay below 2Ĉ".to_string() } else { detail },
                ));
                reports.push(json!({"check": "mollify"}));
                o.tables.push(t);
            }
        }
    }
    o.report["checks"] = Value::Array(reports);
    Ok(o)
}

/// Writes report.json, the CSV tables and field dumps into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for o in &run.outcomes {
        for t in &o.tables {
            let mut w = csv::Writer::from_path(dir.join(&t.file)).map_err(csv_err)?;
            w.write_record(&t.header).map_err(csv_err)?;
            for r in &t.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
        }
        for (file, field) in &o.dumps {
            field.write_binary(std::io::BufWriter::new(std::fs::File::create(dir.join(file))?))?;
        }
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = json!({
        "timestamp": stamp,
        "versions": {"mrlab": env!("CARGO_PKG_VERSION")},
        "seed": run.seed,
        "config": serde_json::to_value(cfg)?,
        "passed": run.passed(),
        "failed": run.failed_checks(),
        "experiments": run.outcomes.iter().map(|o| json!({
            "name": o.name,
            "kind": o.kind,
            "passed": o.passed(),
            "checks": o.checks,
            "report": o.report,
        })).collect::<Vec<_>>(),
    });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Parser)]
#[command(name = "mrlab", version, about = "Maximal-regularity experiments on the periodic torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print the built-in coefficient and forcing laws.
    #[arg(long)]
    pub list_catalog: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment file (TOML or JSON).
    Run { config: PathBuf },
}

/// Exit status for an error raised before or during a run.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Numeric(_) | LabError::Convergence(_) => 1,
        _ => 2,
    }
}

pub fn main_with(cli: Cli) -> i32 {
    if cli.list_catalog {
        for (name, what) in quasilinear::catalog() {
            println!("{name:<30} {what}");
        }
        if cli.command.is_none() {
            return 0;
        }
    }
    let Some(Command::Run { config }) = cli.command else {
        eprintln!("nothing to do; try `mrlab run <config>`");
        return 2;
    };
    if let Some(j) = cli.jobs {
        if j == 0 || rayon::ThreadPoolBuilder::new().num_threads(j).build_global().is_err() {
            eprintln!("error: could not set up {j} worker threads");
            return 2;
        }
    }
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return 2;
        }
    };
    let cfg = match parse_config(&text, Some(&config)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let run = match run_config(&cfg, cli.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let dir = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("mrlab-out"));
    let mut echoed = cfg.clone();
    echoed.seed = run.seed;
    if let Err(e) = write_artifacts(&dir, &echoed, &run) {
        eprintln!("error: {e}");
        return 2;
    }
    for o in &run.outcomes {
        for c in &o.checks {
            println!("{} {}/{}: {}", if c.passed { "PASS" } else { "FAIL" }, o.name, c.name, c.detail);
        }
    }
    if run.passed() {
        0
    } else {
        eprintln!("failed invariants: {}", run.failed_checks().join(", "));
        1
    }
}

pub fn main_entry() -> i32 {
    main_with(Cli::parse())
}

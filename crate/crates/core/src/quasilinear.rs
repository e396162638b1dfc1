//! Fixed-point solver for the second-order quasilinear problem
//!
//!   u′ + a(u, ∇u)·(−Δu) = f(t, x, u, ∇u),  u(0) = u₀,
//!
//! on the torus. Each iterate freezes the coefficient at the previous state
//! and solves the linear problem with the dense backend. The radius, data
//! ball and horizon follow the contraction argument with measured constants.

use crate::error::{input, LabError, Result};
use crate::evolution::{Backend, CoefficientPath, EvolutionFamily, FieldSymbol, SliceCoefficients};
use crate::field::{GridField, SpaceTimeField, TorusGrid};
use crate::rng;
use crate::solver::{mild_solve, uniform_nodes, MRProblem, SolveReport, Trajectory};
use crate::symbol::MultiIndex;
use crate::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C = C::new(0.0, 0.0);

/// Built-in coefficient laws a(y, z), y = u(x), z = ∇u(x). Only real parts of
/// the state enter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientLaw {
    Constant { value: f64 },
    /// base + amp·sin y
    SinState { base: f64, amp: f64 },
    /// base + amp·|z|²/(1 + |z|²)
    GradSaturation { base: f64, amp: f64 },
}

impl CoefficientLaw {
    pub fn eval(&self, y: f64, z: &[f64]) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::SinState { base, amp } => base + amp * y.sin(),
            Self::GradSaturation { base, amp } => {
                let s: f64 = z.iter().map(|v| v * v).sum();
                base + amp * s / (1.0 + s)
            }
        }
    }

    /// (inf, sup) of the law over all states.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Self::Constant { value } => (value, value),
            Self::SinState { base, amp } => (base - amp.abs(), base + amp.abs()),
            Self::GradSaturation { base, amp } => (base.min(base + amp), base.max(base + amp)),
        }
    }

    /// Lipschitz constant in (y, z) with respect to |y₁−y₂| + |z₁−z₂|.
    /// The built-in laws are globally Lipschitz.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::SinState { amp, .. } => amp.abs(),
            // max of d/dr r²/(1+r²) is 3√3/8
            Self::GradSaturation { amp, .. } => amp.abs() * 3.0 * 3f64.sqrt() / 8.0,
        }
    }

    pub fn is_state_independent(&self) -> bool {
        self.lipschitz() == 0.0
    }
}

/// Built-in forcing laws f(t, x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingLaw {
    Zero,
    /// The forcing for which u*(t, x) = e^{−t} Π_j sin x_j solves the problem.
    Manufactured,
    /// rate·y
    Reaction { rate: f64 },
}

impl ForcingLaw {
    /// Lipschitz constant in (y, z), uniform in t and x.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Zero | Self::Manufactured => 0.0,
            Self::Reaction { rate } => rate.abs(),
        }
    }
}

/// Names and one-line descriptions of every built-in law.
pub fn catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        ("coefficient constant", "a = value"),
        ("coefficient sin-state", "a = base + amp·sin(u)"),
        ("coefficient grad-saturation", "a = base + amp·|∇u|²/(1 + |∇u|²)"),
        ("forcing zero", "f = 0"),
        ("forcing manufactured", "f makes u*(t,x) = e^{−t} Π sin x_j an exact solution"),
        ("forcing reaction", "f = rate·u"),
        ("initial manufactured", "u₀ = Π sin x_j"),
    ]
}

/// u*(t, x) = e^{−t} Π_j sin x_j.
pub fn manufactured_solution(t: f64, x: &[f64]) -> f64 {
    (-t).exp() * x.iter().map(|v| v.sin()).product::<f64>()
}

fn manufactured_gradient(t: f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            (-t).exp()
                * x.iter().enumerate().map(|(i, v)| if i == j { v.cos() } else { v.sin() }).product::<f64>()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonMode {
    /// Run on the horizon produced by the shrinking recipe.
    Recipe,
    /// Run on the full configured horizon T₀ and only report the recipe.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasilinearProblem {
    grid: TorusGrid,
    p: f64,
    q: f64,
    coefficient: CoefficientLaw,
    forcing: ForcingLaw,
    initial: GridField,
    reference: GridField,
    horizon: f64,
    steps: usize,
    t_min: f64,
    mode: HorizonMode,
    tolerance: f64,
    max_iter: usize,
    probes: usize,
    seed: u64,
}

impl QuasilinearProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TorusGrid,
        p: f64,
        q: f64,
        coefficient: CoefficientLaw,
        forcing: ForcingLaw,
        initial: GridField,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(p > 1.0 && p.is_finite() && q > 1.0 && q.is_finite()) {
            return input(format!("exponents must lie in (1, ∞), got p = {p}, q = {q}"));
        }
        let gap = embedding_gap(p, q, grid.dim());
        if !(gap > 1.0) {
            return input(format!("2(1 − 1/p) − d/q = {gap} must exceed 1 for the C¹ embedding"));
        }
        let (lo, hi) = coefficient.range();
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(LabError::NotElliptic(format!(
                "coefficient law ranges over [{lo}, {hi}], which is not bounded away from 0"
            )));
        }
        if initial.grid() != grid {
            return input("initial value lives on a different grid");
        }
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return input("horizon must be positive and steps ≥ 1");
        }
        Ok(Self {
            grid,
            p,
            q,
            coefficient,
            forcing,
            reference: initial.clone(),
            initial,
            horizon,
            steps,
            t_min: horizon * 1e-14,
            mode: HorizonMode::Recipe,
            tolerance: 1e-10,
            max_iter: 50,
            probes: 16,
            seed: 0,
        })
    }

    /// Reference state x₀ around which the data ball is centred (defaults
    /// to the initial value).
    pub fn with_reference(mut self, x0: GridField) -> Result<Self> {
        if x0.grid() != self.grid {
            return input("reference state lives on a different grid");
        }
        self.reference = x0;
        Ok(self)
    }

    pub fn with_initial(&self, u0: GridField) -> Result<Self> {
        if u0.grid() != self.grid {
            return input("initial value lives on a different grid");
        }
        let mut out = self.clone();
        out.initial = u0;
        Ok(out)
    }

    pub fn with_mode(mut self, mode: HorizonMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_t_min(mut self, t_min: f64) -> Self {
        self.t_min = t_min;
        self
    }

    /// Absolute tolerance on the MR increment and the iteration cap.
    pub fn with_iteration(mut self, tolerance: f64, max_iter: usize) -> Self {
        self.tolerance = tolerance;
        self.max_iter = max_iter;
        self
    }

    /// Probe count and seed used by the constant measurements.
    pub fn with_probes(mut self, probes: usize, seed: u64) -> Self {
        self.probes = probes.max(1);
        self.seed = seed;
        self
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn coefficient(&self) -> CoefficientLaw {
        self.coefficient
    }

    pub fn forcing(&self) -> ForcingLaw {
        self.forcing
    }

    pub fn initial(&self) -> &GridField {
        &self.initial
    }

    pub fn reference(&self) -> &GridField {
        &self.reference
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self) -> HorizonMode {
        self.mode
    }

    /// θ = 1 − 1/p.
    pub fn theta(&self) -> f64 {
        1.0 - 1.0 / self.p
    }

    /// ‖x‖ in X_p = (L^q, W^{2,q})_{1−1/p,p}.
    pub fn trace_norm(&self, x: &GridField) -> Result<f64> {
        x.trace_norm_oracle(self.theta(), self.q, self.p, 2)
    }

    fn delta(&self) -> f64 {
        0.25 * self.coefficient.range().0
    }

    /// Real parts of v and ∇v at every grid point, from coefficients.
    fn state(&self, coeffs: &[C]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let g = self.grid;
        let sp = g.spectral();
        let mut v = coeffs.to_vec();
        sp.inverse(&mut v);
        let grads = (0..g.dim())
            .map(|j| {
                let mut d: Vec<C> =
                    coeffs.iter().enumerate().map(|(i, c)| c * C::new(0.0, g.frequency(i)[j])).collect();
                sp.inverse(&mut d);
                d.into_iter().map(|z| z.re).collect()
            })
            .collect();
        (v.into_iter().map(|z| z.re).collect(), grads)
    }

    fn coefficient_field(&self, coeffs: &[C]) -> Result<SliceCoefficients> {
        let (v, grads) = self.state(coeffs);
        let d = self.grid.dim();
        let a: Vec<C> = (0..v.len())
            .map(|i| {
                let z: Vec<f64> = grads.iter().map(|g| g[i]).collect();
                C::new(self.coefficient.eval(v[i], &z), 0.0)
            })
            .collect();
        let entries = (0..d).map(|j| (MultiIndex::axis(d, j, 2), a.clone())).collect();
        Ok(SliceCoefficients::Field(FieldSymbol::new(self.grid, 2, entries)?))
    }

    /// F(t, v) on the grid, v given by coefficients.
    fn forcing_field(&self, t: f64, coeffs: &[C]) -> GridField {
        let g = self.grid;
        match self.forcing {
            ForcingLaw::Zero => GridField::zeros(g),
            ForcingLaw::Reaction { rate } => {
                let (v, _) = self.state(coeffs);
                GridField::new(g, v.into_iter().map(|y| C::new(rate * y, 0.0)).collect())
                    .expect("grid-sized vector")
            }
            ForcingLaw::Manufactured => GridField::from_fn(g, |x| {
                let u = manufactured_solution(t, x);
                let z = manufactured_gradient(t, x);
                let d = x.len() as f64;
                // ∂_t u* = −u*, −Δu* = d·u*
                C::new(-u + self.coefficient.eval(u, &z) * d * u, 0.0)
            }),
        }
    }

    fn family(&self, times: &[f64], slices: Vec<SliceCoefficients>) -> Result<Arc<EvolutionFamily>> {
        let path = if slices.len() == 1 {
            CoefficientPath::new(vec![times[0], *times.last().expect("non-empty")], slices)?
        } else {
            CoefficientPath::new(times.to_vec(), slices)?
        };
        Ok(Arc::new(EvolutionFamily::new(self.grid, path, Backend::Dense, self.delta())?))
    }

    /// The linear problem with A and F frozen at x₀ on [0, T].
    fn frozen_problem(&self, horizon: f64, forcing: Option<SpaceTimeField>) -> Result<MRProblem> {
        let times = uniform_nodes(0.0, horizon, self.steps);
        let x0 = self.reference.coeffs();
        let fam = self.family(&times, vec![self.coefficient_field(&x0)?])?;
        let f = match forcing {
            Some(f) => f,
            None => {
                let slices = times.iter().map(|&t| self.forcing_field(t, &x0)).collect();
                SpaceTimeField::new(times.clone(), slices)?
            }
        };
        MRProblem::new(fam, 0.0, f, self.p, self.q)
    }

    /// L_x(v): coefficients frozen at v on each slice midpoint, forcing
    /// F(t, v(t)) at the nodes, initial value x.
    fn iterate_problem(&self, horizon: f64, v: &Trajectory, x: &GridField) -> Result<MRProblem> {
        let times = uniform_nodes(0.0, horizon, self.steps);
        if v.times() != times.as_slice() {
            return input("iterate lives on different time nodes");
        }
        let slices = v.midpoint_coeffs().iter().map(|c| self.coefficient_field(c)).collect::<Result<Vec<_>>>()?;
        let fam = self.family(&times, slices)?;
        let f = times.iter().zip(v.node_coeffs()).map(|(&t, c)| self.forcing_field(t, c)).collect();
        MRProblem::new(fam, 0.0, SpaceTimeField::new(times, f)?, self.p, self.q)?.with_initial(x.clone())
    }
}

/// 2(1 − 1/p) − d/q.
pub fn embedding_gap(p: f64, q: f64, d: usize) -> f64 {
    2.0 * (1.0 - 1.0 / p) - d as f64 / q
}

/// w^x: the solution with A and F frozen at the reference state, on the
/// configured horizon.
pub fn reference_solve(prob: &QuasilinearProblem, x: &GridField) -> Result<SpaceTimeField> {
    Ok(reference_report(prob, prob.horizon, x)?.solution())
}

fn reference_report(prob: &QuasilinearProblem, horizon: f64, x: &GridField) -> Result<SolveReport> {
    mild_solve(&prob.frozen_problem(horizon, None)?.with_initial(x.clone())?)
}

/// sup over time nodes of ‖u(t) − x‖_{X_p}.
fn sup_trace(prob: &QuasilinearProblem, tr: &Trajectory, shift: Option<&GridField>) -> Result<f64> {
    let mut best: f64 = 0.0;
    for k in 0..tr.times().len() {
        let mut u = tr.node(k);
        if let Some(x) = shift {
            u = u.sub(x)?;
        }
        best = best.max(prob.trace_norm(&u)?);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// sup_t ‖u(t)‖_{X_p} / ‖u‖_MR over solutions with u(0) = 0.
    pub c_tr: f64,
    /// sup_t ‖w(t)‖_{X_p} / ‖w‖_MR over free frozen evolutions.
    pub c1: f64,
    /// ‖w^x − w^y‖_MR / ‖x − y‖_{X_p}.
    pub c2: f64,
    /// Maximal-regularity constant of A(·, x₀), data and forcing combined.
    pub c_a: f64,
    /// Forcing part of c_a.
    pub c_a_forcing: f64,
    /// sup (‖v‖_∞ + Σ_j‖∂_j v‖_∞) / ‖v‖_{X_p}.
    pub embedding: f64,
    /// R = 1 + C_Tr + C_Tr C₂ + C₁C₂ + ‖w^{x₀}‖_{C(J₀;X_p)}.
    pub big_r: f64,
    /// Lipschitz constant of v ↦ A(t, v) from X_p to L(W^{2,q}, L^q) on the R-ball.
    pub c_r: f64,
    /// C_J per unit T^{1/p}.
    pub c_j_rate: f64,
    pub probes: usize,
}

impl MeasuredConstants {
    /// C_J = ‖φ_R‖_{L^p(0,T)}.
    pub fn c_j(&self, horizon: f64, p: f64) -> f64 {
        self.c_j_rate * horizon.powf(1.0 / p)
    }

    pub fn c3(&self) -> f64 {
        self.c_tr * self.c2 + self.c1 * self.c2
    }

    /// K₁(s) = 2C_A(1 + C_J C₃ + C(R) C₃ s).
    pub fn k1(&self, s: f64, c_j: f64) -> f64 {
        2.0 * self.c_a * (1.0 + c_j * self.c3() + self.c_r * self.c3() * s)
    }

    /// K₂(s) = 2C_A(C_J C_Tr + C(R) C_Tr s).
    pub fn k2(&self, s: f64, c_j: f64) -> f64 {
        2.0 * self.c_a * (c_j * self.c_tr + self.c_r * self.c_tr * s)
    }
}

fn random_field(grid: TorusGrid, seed: u64, index: u64, band: usize) -> GridField {
    let mut g = rng::stream(seed, rng::tag::FIELD, index);
    let coeffs = grid
        .frequencies()
        .iter()
        .map(|xi| {
            if xi.iter().all(|v| v.abs() <= band as f64) {
                let decay = 1.0 / (1.0 + xi.iter().map(|v| v * v).sum::<f64>());
                let re: f64 = g.sample(StandardNormal);
                let im: f64 = g.sample(StandardNormal);
                C::new(re, im) * decay
            } else {
                ZERO
            }
        })
        .collect();
    GridField::from_coeffs(grid, coeffs)
}

/// Real part of a field; the state laws only see real values.
fn real_part(f: &GridField) -> GridField {
    GridField::new(f.grid(), f.values().iter().map(|z| C::new(z.re, 0.0)).collect()).expect("same grid")
}

/// sup over probes of (‖v‖_∞ + Σ_j‖∂_j v‖_∞) / ‖v‖_{X_p}: random fields of
/// every band plus single modes.
pub fn embedding_constant(grid: TorusGrid, p: f64, q: f64, probes: usize, seed: u64) -> Result<f64> {
    let theta = 1.0 - 1.0 / p;
    let half = grid.n() / 2;
    let mut fields = Vec::new();
    for r in 0..probes {
        let band = 1 + (r * half) / probes.max(1);
        fields.push(random_field(grid, seed, r as u64, band.min(half)));
    }
    let mut k = 1;
    while k <= half {
        let mut mode = vec![0i64; grid.dim()];
        mode[0] = k as i64;
        fields.push(GridField::mode(grid, &mode, C::new(1.0, 0.0))?);
        k *= 2;
    }
    let mut best: f64 = 0.0;
    for f in fields {
        let den = f.trace_norm_oracle(theta, q, p, 2)?;
        if den == 0.0 {
            continue;
        }
        let mut num = f.max_abs();
        for j in 0..grid.dim() {
            num += f.apply_multiplier(|xi| C::new(0.0, xi[j]))?.max_abs();
        }
        best = best.max(num / den);
    }
    Ok(best)
}

fn envelope_forcing(grid: TorusGrid, times: &[f64], seed: u64, index: u64) -> Result<SpaceTimeField> {
    let band = 1 + (index as usize % (grid.n() / 2));
    let base = random_field(grid, seed ^ 0x5a5a, index, band);
    let mut g = rng::stream(seed, rng::tag::PROBE, index);
    let omega = 2.0 * PI * g.random_range(0..4) as f64;
    let (a, b) = (times[0], *times.last().expect("non-empty"));
    let slices = times
        .iter()
        .map(|&t| {
            let s = (t - a) / (b - a);
            base.scale(C::from_polar(1.0 + (PI * s).sin(), omega * s))
        })
        .collect();
    SpaceTimeField::new(times.to_vec(), slices)
}

/// Estimates C_Tr, C₁, C₂, C_A, the embedding constant, R and C(R) on the
/// configured horizon by maximizing the defining ratios over seeded probes.
pub fn constants_probe(prob: &QuasilinearProblem) -> Result<MeasuredConstants> {
    let grid = prob.grid;
    let horizon = prob.horizon;
    let times = uniform_nodes(0.0, horizon, prob.steps);
    let base = prob.frozen_problem(horizon, None)?;
    base.family().parabolic()?;
    let (mut c_tr, mut c_af, mut c1, mut c2): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let zero = SpaceTimeField::zeros(grid, &times)?;
    for r in 0..prob.probes {
        // zero data, non-trivial forcing
        let f = envelope_forcing(grid, &times, prob.seed, r as u64)?;
        let rep = mild_solve(&base.with_forcing(f)?)?;
        if rep.norms.forcing > 0.0 && rep.norms.mr > 0.0 {
            c_af = c_af.max(rep.norms.mr / rep.norms.forcing);
            c_tr = c_tr.max(sup_trace(prob, &rep.trajectory, None)? / rep.norms.mr);
        }
        // free evolution from random data
        let band = 1 + (r * (grid.n() / 2)) / prob.probes;
        let x = real_part(&random_field(grid, prob.seed, 1000 + r as u64, band));
        let xn = prob.trace_norm(&x)?;
        if xn == 0.0 {
            continue;
        }
        let rep = mild_solve(&base.with_forcing(zero.clone())?.with_initial(x)?)?;
        if rep.norms.mr > 0.0 {
            c2 = c2.max(rep.norms.mr / xn);
            c1 = c1.max(sup_trace(prob, &rep.trajectory, None)? / rep.norms.mr);
        }
    }
    let embedding = embedding_constant(grid, prob.p, prob.q, prob.probes, prob.seed)?;
    let w0 = reference_report(prob, horizon, &prob.reference)?;
    let w_sup = sup_trace(prob, &w0.trajectory, None)?;
    let big_r = 1.0 + c_tr + c_tr * c2 + c1 * c2 + w_sup;
    let c_r = prob.coefficient.lipschitz() * embedding;
    let c_j_rate = prob.forcing.lipschitz() * (2.0 * PI).powf(grid.dim() as f64 / prob.q) * embedding;
    Ok(MeasuredConstants {
        c_tr,
        c1,
        c2,
        c_a: c_af.max(c2),
        c_a_forcing: c_af,
        embedding,
        big_r,
        c_r,
        c_j_rate,
        probes: prob.probes,
    })
}

/// Radius, data ball and horizon from the contraction argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecipe {
    /// 1/(4C(R)C_A(C_Tr + C_Tr C₂ + C₁C₂)); infinite for state-independent coefficients.
    pub r0: f64,
    pub r: f64,
    pub epsilon: f64,
    /// Final horizon, or None if it fell below T_min.
    pub horizon: Option<f64>,
    pub halvings: usize,
    /// sup_t ‖w^{x₀}(t) − x₀‖_{X_p} on the final horizon.
    pub reference_drift: f64,
    /// ‖w^{x₀}‖_MR on the final horizon.
    pub reference_mr: f64,
    pub c_j: f64,
}

fn recipe_holds(c: &MeasuredConstants, r: f64, drift: f64, w_mr: f64, c_j: f64) -> bool {
    let close = c.c_r == 0.0 || drift <= 1.0 / (4.0 * c.c_r * c.c_a);
    let forcing_small = 2.0 * c.c_a * c_j * c.c_tr <= 0.25;
    let ratio = if c.c_r == 0.0 { c_j == 0.0 } else { c_j / c.c_r <= r / 4.0 };
    close && forcing_small && ratio && w_mr <= r / 4.0
}

/// Halves T from T₀ until every smallness condition holds.
pub fn horizon_recipe(prob: &QuasilinearProblem, c: &MeasuredConstants) -> Result<HorizonRecipe> {
    let denom = 4.0 * c.c_r * c.c_a * (c.c_tr + c.c3());
    let r0 = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
    let mut r = r0.min(1.0);
    if c.c_r > 0.0 && c.c_tr > 0.0 {
        r = r.min(1.0 / (16.0 * c.c_a * c.c_r * c.c_tr));
    }
    let epsilon = (r / (4.0 * c.c_a)).min(r);
    let mut t = prob.horizon;
    let mut halvings = 0;
    loop {
        let w = reference_report(prob, t, &prob.reference)?;
        let drift = sup_trace(prob, &w.trajectory, Some(&prob.reference))?;
        let c_j = c.c_j(t, prob.p);
        if recipe_holds(c, r, drift, w.norms.mr, c_j) {
            return Ok(HorizonRecipe {
                r0,
                r,
                epsilon,
                horizon: Some(t),
                halvings,
                reference_drift: drift,
                reference_mr: w.norms.mr,
                c_j,
            });
        }
        if t / 2.0 < prob.t_min {
            return Ok(HorizonRecipe {
                r0,
                r,
                epsilon,
                horizon: None,
                halvings,
                reference_drift: drift,
                reference_mr: w.norms.mr,
                c_j,
            });
        }
        t /= 2.0;
        halvings += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionTrace {
    pub mode: HorizonMode,
    /// Horizon the iteration ran on.
    pub horizon: f64,
    pub recipe: HorizonRecipe,
    pub constants: MeasuredConstants,
    /// ‖u₀ − x₀‖_{X_p}.
    pub data_distance: f64,
    pub data_in_ball: bool,
    /// ‖vᵏ⁺¹ − vᵏ‖_MR.
    pub increments: Vec<f64>,
    /// Successive increment ratios.
    pub ratios: Vec<f64>,
    /// ‖vᵏ − w^{x₀}‖_MR for every iterate, starting with v⁰ = w^{u₀}.
    pub distances: Vec<f64>,
    /// First iterate within r of w^{x₀}.
    pub entered_at: Option<usize>,
    /// Largest ratio once the iterates are inside the ball.
    pub contraction_after_entry: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates vᵏ⁺¹ = L_{u₀}(vᵏ) from v⁰ = w^{u₀}.
pub fn quasilinear_solve(prob: &QuasilinearProblem) -> Result<(SolveReport, ContractionTrace)> {
    let c = constants_probe(prob)?;
    let recipe = horizon_recipe(prob, &c)?;
    quasilinear_solve_with(prob, &c, &recipe)
}

/// As `quasilinear_solve` with constants and recipe supplied.
pub fn quasilinear_solve_with(
    prob: &QuasilinearProblem,
    c: &MeasuredConstants,
    recipe: &HorizonRecipe,
) -> Result<(SolveReport, ContractionTrace)> {
    let data_distance = prob.trace_norm(&prob.initial.sub(&prob.reference)?)?;
    let data_in_ball = data_distance <= recipe.epsilon;
    let horizon = match prob.mode {
        HorizonMode::Full => prob.horizon,
        HorizonMode::Recipe => {
            let Some(t) = recipe.horizon else {
                return Err(LabError::Convergence(format!(
                    "horizon shrank below T_min = {:e} before the smallness conditions held",
                    prob.t_min
                )));
            };
            if !data_in_ball {
                return input(format!(
                    "‖u₀ − x₀‖ = {data_distance:e} exceeds the data radius ε = {:e}",
                    recipe.epsilon
                ));
            }
            t
        }
    };
    let kit_prob = prob.frozen_problem(horizon, None)?;
    let kit = kit_prob.norm_kit()?;
    let w_ref = reference_report(prob, horizon, &prob.reference)?.trajectory;
    let mut current = reference_report(prob, horizon, &prob.initial)?;
    let mut distances = vec![kit.summarize(&current.trajectory.difference(&w_ref)?).mr];
    let mut increments = Vec::new();
    let mut converged = false;
    let mut streak = 0;
    for _ in 0..prob.max_iter {
        let next = mild_solve(&prob.iterate_problem(horizon, &current.trajectory, &prob.initial)?)?;
        let inc = kit.summarize(&next.trajectory.difference(&current.trajectory)?).mr;
        distances.push(kit.summarize(&next.trajectory.difference(&w_ref)?).mr);
        if let Some(&prev) = increments.last() {
            if prev > 0.0 && inc / prev > 0.9 {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        increments.push(inc);
        current = next;
        if inc < prob.tolerance {
            converged = true;
            break;
        }
        if streak >= 3 {
            return Err(LabError::Convergence(format!(
                "contraction failed: increment ratio above 0.9 three times in a row, increments {increments:?}"
            )));
        }
    }
    if !converged {
        return Err(LabError::Convergence(format!(
            "no convergence in {} iterations, increments {increments:?}",
            prob.max_iter
        )));
    }
    let ratios: Vec<f64> =
        increments.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let entered_at = distances.iter().position(|&d| d <= recipe.r);
    // ratios[k] compares the increment out of v^{k+1} with the one out of v^k
    let contraction_after_entry = entered_at.map(|e| ratios.iter().skip(e).copied().fold(0.0, f64::max));
    let trace = ContractionTrace {
        mode: prob.mode,
        horizon,
        recipe: recipe.clone(),
        constants: c.clone(),
        data_distance,
        data_in_ball,
        iterations: increments.len(),
        increments,
        ratios,
        distances,
        entered_at,
        contraction_after_entry,
        converged,
    };
    Ok((current, trace))
}

/// ‖u − u*‖_MR for the manufactured solution u*(t, x) = e^{−t} Π sin x_j.
pub fn manufactured_error(prob: &QuasilinearProblem, rep: &SolveReport) -> Result<f64> {
    let grid = prob.grid;
    let tr = &rep.trajectory;
    let times = tr.times().to_vec();
    let exact = |t: f64| GridField::from_fn(grid, |x| C::new(manufactured_solution(t, x), 0.0)).coeffs();
    let nodes: Vec<Vec<C>> = times.iter().map(|&t| exact(t)).collect();
    let mids: Vec<Vec<C>> = times.windows(2).map(|w| exact(0.5 * (w[0] + w[1]))).collect();
    let deriv: Vec<Vec<C>> = mids.iter().map(|m| m.iter().map(|c| -c).collect()).collect();
    let zeros: Vec<Vec<C>> = mids.iter().map(|m| vec![ZERO; m.len()]).collect();
    let star = Trajectory::from_parts(grid, times, nodes, mids, deriv, zeros.clone(), zeros);
    let kit = prob.frozen_problem(*tr.times().last().expect("non-empty"), None)?.norm_kit()?;
    Ok(kit.summarize(&tr.difference(&star)?).mr)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// ‖u − v‖_MR / ‖u₀ − v₀‖_{X_p} per perturbation.
    pub ratios: Vec<f64>,
    pub max: f64,
    pub min: f64,
    /// max/min ≤ 2.
    pub stable: bool,
    /// K₁(2)/(1 − ½).
    pub bound: f64,
    pub within_bound: bool,
}

/// Pairwise solves from u₀ and u₀ + η_i with seeded perturbations of
/// trace norm `size`.
pub fn lipschitz_in_data(
    prob: &QuasilinearProblem,
    c: &MeasuredConstants,
    recipe: &HorizonRecipe,
    perturbations: usize,
    size: f64,
) -> Result<LipschitzReport> {
    if perturbations == 0 || !(size > 0.0) {
        return input("Lipschitz study needs perturbations ≥ 1 and a positive size");
    }
    let (base, trace) = quasilinear_solve_with(prob, c, recipe)?;
    let kit = prob.frozen_problem(trace.horizon, None)?.norm_kit()?;
    let grid = prob.grid;
    let mut ratios = Vec::with_capacity(perturbations);
    for i in 0..perturbations {
        let eta = real_part(&random_field(grid, rng::child_seed(prob.seed, rng::tag::PERTURB, i as u64), 0, 4));
        let n = prob.trace_norm(&eta)?;
        if n == 0.0 {
            return input("degenerate perturbation");
        }
        let eta = eta.scale(C::new(size / n, 0.0));
        let other = prob.with_initial(prob.initial.add(&eta)?)?;
        let (rep, _) = quasilinear_solve_with(&other, c, recipe)?;
        let d = kit.summarize(&rep.trajectory.difference(&base.trajectory)?).mr;
        ratios.push(d / prob.trace_norm(&eta)?);
    }
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = c.k1(2.0, recipe.c_j) / 0.5;
    Ok(LipschitzReport { stable: max <= 2.0 * min, within_bound: max <= bound, ratios, max, min, bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_initial(grid: TorusGrid) -> GridField {
        GridField::from_fn(grid, |x| C::new(manufactured_solution(0.0, x), 0.0))
    }

    #[test]
    fn exponent_condition_is_enforced() {
        let g = TorusGrid::new(1, 16).unwrap();
        let law = CoefficientLaw::Constant { value: 1.0 };
        assert!(QuasilinearProblem::new(g, 2.0, 2.0, law, ForcingLaw::Zero, sin_initial(g), 1.0, 4).is_err());
        assert!(QuasilinearProblem::new(g, 4.0, 4.0, law, ForcingLaw::Zero, sin_initial(g), 1.0, 4).is_ok());
    }

    #[test]
    fn degenerate_law_is_not_elliptic() {
        let g = TorusGrid::new(1, 16).unwrap();
        let law = CoefficientLaw::SinState { base: 0.5, amp: 0.5 };
        let err = QuasilinearProblem::new(g, 4.0, 4.0, law, ForcingLaw::Zero, sin_initial(g), 1.0, 4);
        assert!(matches!(err, Err(LabError::NotElliptic(_))));
    }

    #[test]
    fn heat_flow_of_initial_value() {
        let g = TorusGrid::new(1, 16).unwrap();
        let law = CoefficientLaw::Constant { value: 1.0 };
        let prob = QuasilinearProblem::new(g, 4.0, 4.0, law, ForcingLaw::Zero, sin_initial(g), 0.5, 50).unwrap();
        let w = reference_solve(&prob, prob.initial()).unwrap();
        let last = w.last();
        let want = (-0.5f64).exp();
        for (i, v) in last.values().iter().enumerate() {
            let x = g.coords(i)[0];
            assert!((v.re - want * x.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn manufactured_forcing_matches_law() {
        let g = TorusGrid::new(1, 16).unwrap();
        let law = CoefficientLaw::SinState { base: 1.0, amp: 0.5 };
        let prob =
            QuasilinearProblem::new(g, 4.0, 4.0, law, ForcingLaw::Manufactured, sin_initial(g), 1.0, 4).unwrap();
        let f = prob.forcing_field(0.3, &prob.initial.coeffs());
        for (i, v) in f.values().iter().enumerate() {
            let u = manufactured_solution(0.3, &g.coords(i));
            assert!((v.re - 0.5 * u.sin() * u).abs() < 1e-12);
        }
    }
}

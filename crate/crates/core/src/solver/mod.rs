//! Mild solutions of u′ + (λ + A(t))u = f, u(a) = x, and the
//! maximal-regularity norm bookkeeping around them.
//!
//! Time nodes come from the forcing; each node interval is cut at its
//! midpoint and at every path breakpoint inside it. On each piece the
//! coefficients are constant and the forcing is linear, so the mode backend
//! integrates exactly with φ-functions and the dense backend runs a
//! matrix-free exponential of an augmented generator.

mod estimate;
mod freezing;
mod perturb;

pub use estimate::{
    domain_equivalence, interpolation_constant, make_probes, mr_constant_estimate, mr_constant_sweep,
    ConstantRow, ConstantTable, DomainEquivalence, InterpolationReport, NormChoice, Probe, ProbeKind, ProbeSpec,
    ScanSpec, SweepSpec,
};
pub use freezing::{freezing_audit, freezing_threshold, frozen_path, FreezingReport, FreezingSpec};
pub use perturb::{
    mollify_convergence, perturbation_size, perturbed_solve, MollifyReport, MollifyRow, PerturbedReport,
};

use crate::error::{input, LabError, Result};
use crate::evolution::{Backend, EvolutionFamily};
use crate::expm::expmv;
use crate::field::{GridField, LqNorm, SobolevNorm, SpaceTimeField, TorusGrid};
use crate::weights::{PowerWeight, SampledWeight};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// (e^z, φ₁(z), φ₂(z), φ₃(z)) with φ_k(z) = Σ_j z^j/(j+k)!.
pub(crate) fn phi123(z: C) -> (C, C, C, C) {
    if z.norm() < 0.5 {
        let mut term = C::new(1.0 / 6.0, 0.0);
        let mut p3 = term;
        for j in 1..24 {
            term = term * z / (j as f64 + 3.0);
            p3 += term;
        }
        let p2 = 0.5 + z * p3;
        let p1 = 1.0 + z * p2;
        let e = 1.0 + z * p1;
        (e, p1, p2, p3)
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        (e, p1, p2, p3)
    }
}

fn l2(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn lerp(a: &[C], b: &[C], s: f64) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
}

#[derive(Clone)]
pub struct MRProblem {
    family: Arc<EvolutionFamily>,
    lambda: f64,
    forcing: SpaceTimeField,
    initial: Option<GridField>,
    p: f64,
    q: f64,
    time_weight: Option<PowerWeight>,
    space_weight: Option<SampledWeight>,
    norm_start: Option<f64>,
    tolerance: Option<f64>,
}

impl MRProblem {
    pub fn new(family: Arc<EvolutionFamily>, lambda: f64, forcing: SpaceTimeField, p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite() && q > 1.0 && q.is_finite()) {
            return input(format!("exponents must lie in (1, ∞), got p = {p}, q = {q}"));
        }
        if !lambda.is_finite() {
            return input("λ must be finite");
        }
        if forcing.grid() != family.grid() {
            return input("forcing and family live on different grids");
        }
        if forcing.times().len() < 2 {
            return input("forcing needs at least two time nodes");
        }
        family.parabolic()?;
        Ok(Self {
            family,
            lambda,
            forcing,
            initial: None,
            p,
            q,
            time_weight: None,
            space_weight: None,
            norm_start: None,
            tolerance: None,
        })
    }

    pub fn with_initial(mut self, x: GridField) -> Result<Self> {
        if x.grid() != self.family.grid() {
            return input("initial value lives on a different grid");
        }
        self.initial = Some(x);
        Ok(self)
    }

    /// Power weight |t − origin|^α; α must lie in (−1, p − 1).
    pub fn with_time_weight(mut self, v: PowerWeight) -> Result<Self> {
        if !v.is_ap(self.p) {
            return input(format!("time weight exponent {} is outside (−1, {})", v.exponent, self.p - 1.0));
        }
        self.time_weight = Some(v);
        Ok(self)
    }

    pub fn with_space_weight(mut self, w: SampledWeight) -> Result<Self> {
        LqNorm::new(self.family.grid(), self.q, Some(&w))?;
        self.space_weight = Some(w);
        Ok(self)
    }

    /// Norms integrate only over node intervals starting at or after `t`.
    pub fn with_norm_start(mut self, t: f64) -> Self {
        self.norm_start = Some(t);
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn with_forcing(&self, forcing: SpaceTimeField) -> Result<Self> {
        if forcing.grid() != self.family.grid() || forcing.times() != self.forcing.times() {
            return input("replacement forcing must share grid and time nodes");
        }
        let mut out = self.clone();
        out.forcing = forcing;
        Ok(out)
    }

    pub fn with_family(&self, family: Arc<EvolutionFamily>) -> Result<Self> {
        if family.grid() != self.family.grid() {
            return input("replacement family lives on a different grid");
        }
        family.parabolic()?;
        let mut out = self.clone();
        out.family = family;
        Ok(out)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.lambda = lambda;
        out
    }

    pub fn family(&self) -> &Arc<EvolutionFamily> {
        &self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forcing(&self) -> &SpaceTimeField {
        &self.forcing
    }

    pub fn initial(&self) -> Option<&GridField> {
        self.initial.as_ref()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn time_weight(&self) -> Option<&PowerWeight> {
        self.time_weight.as_ref()
    }

    pub fn space_weight(&self) -> Option<&SampledWeight> {
        self.space_weight.as_ref()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(match self.family.backend() {
            Backend::ModeDiagonal => 1e-8,
            Backend::Dense => 1e-6,
        })
    }

    pub(crate) fn norm_kit(&self) -> Result<NormKit> {
        NormKit::new(
            self.family.grid(),
            self.family.path().order(),
            self.family.delta(),
            self.p,
            self.q,
            self.time_weight.as_ref(),
            self.space_weight.as_ref(),
            self.forcing.times(),
            self.norm_start,
        )
    }
}

/// Node values plus midpoint values of u, u′, A u and f (all as Fourier
/// coefficients). Differences of trajectories are trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TorusGrid,
    times: Vec<f64>,
    nodes: Vec<Vec<C>>,
    mids: Vec<Vec<C>>,
    deriv: Vec<Vec<C>>,
    op: Vec<Vec<C>>,
    forcing: Vec<Vec<C>>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        grid: TorusGrid,
        times: Vec<f64>,
        nodes: Vec<Vec<C>>,
        mids: Vec<Vec<C>>,
        deriv: Vec<Vec<C>>,
        op: Vec<Vec<C>>,
        forcing: Vec<Vec<C>>,
    ) -> Self {
        Self { grid, times, nodes, mids, deriv, op, forcing }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_coeffs(&self) -> &[Vec<C>] {
        &self.nodes
    }

    pub fn midpoint_coeffs(&self) -> &[Vec<C>] {
        &self.mids
    }

    pub fn derivative_coeffs(&self) -> &[Vec<C>] {
        &self.deriv
    }

    pub fn operator_coeffs(&self) -> &[Vec<C>] {
        &self.op
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.times != other.times {
            return input("trajectories live on different grids or time nodes");
        }
        let sub = |a: &[Vec<C>], b: &[Vec<C>]| -> Vec<Vec<C>> {
            a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect()).collect()
        };
        Ok(Self {
            grid: self.grid,
            times: self.times.clone(),
            nodes: sub(&self.nodes, &other.nodes),
            mids: sub(&self.mids, &other.mids),
            deriv: sub(&self.deriv, &other.deriv),
            op: sub(&self.op, &other.op),
            forcing: sub(&self.forcing, &other.forcing),
        })
    }

    /// u at the time nodes.
    pub fn solution(&self) -> SpaceTimeField {
        let slices = self.nodes.iter().map(|c| GridField::from_coeffs(self.grid, c.clone())).collect();
        SpaceTimeField::new(self.times.clone(), slices).expect("trajectory nodes are consistent")
    }

    pub fn node(&self, k: usize) -> GridField {
        GridField::from_coeffs(self.grid, self.nodes[k].clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    /// ‖u‖ in L^p_v(L^q_w).
    pub u: f64,
    pub u_prime: f64,
    /// ‖A₀u‖ with A₀ = δ(−Δ)^{m/2}.
    pub a0u: f64,
    pub au: f64,
    /// ‖u‖ in L^p_v(W^{m,q}_w).
    pub sobolev: f64,
    pub sobolev_semi: f64,
    /// ‖u′‖ + ‖u‖_{W^{m,q}}.
    pub mr: f64,
    pub forcing: f64,
}

impl NormSummary {
    /// λ‖u‖ + ‖u‖_MR.
    pub fn shifted(&self, lambda: f64) -> f64 {
        lambda * self.u + self.mr
    }
}

/// Spatial norm tables plus the midpoint weights v(t_mid)·Δt.
pub(crate) struct NormKit {
    grid: TorusGrid,
    lq: LqNorm,
    sob: SobolevNorm,
    a0: Vec<C>,
    p: f64,
    weights: Vec<f64>,
}

impl NormKit {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        grid: TorusGrid,
        m: u32,
        delta: f64,
        p: f64,
        q: f64,
        v: Option<&PowerWeight>,
        w: Option<&SampledWeight>,
        times: &[f64],
        norm_start: Option<f64>,
    ) -> Result<Self> {
        let lq = LqNorm::new(grid, q, w)?;
        let sob = SobolevNorm::new(grid, m, lq.clone());
        let a0 = grid.frequency_norms().iter().map(|r| C::new(delta * r.powi(m as i32), 0.0)).collect();
        let weights = times
            .windows(2)
            .map(|t| {
                if norm_start.is_some_and(|s| t[0] < s) {
                    return 0.0;
                }
                let mid = 0.5 * (t[0] + t[1]);
                (t[1] - t[0]) * v.map_or(1.0, |v| v.eval(mid))
            })
            .collect();
        Ok(Self { grid, lq, sob, a0, p, weights })
    }

    fn phys(&self, coeffs: &[C]) -> Vec<C> {
        let mut v = coeffs.to_vec();
        self.grid.spectral().inverse(&mut v);
        v
    }

    pub(crate) fn lq_of_coeffs(&self, coeffs: &[C]) -> f64 {
        self.lq.norm(&self.phys(coeffs))
    }

    /// (Σ_k w_k x_k^p)^{1/p}.
    pub(crate) fn time_norm(&self, vals: &[f64]) -> f64 {
        let s: f64 = vals.iter().zip(&self.weights).map(|(x, w)| w * x.powf(self.p)).sum();
        s.powf(1.0 / self.p)
    }

    pub(crate) fn summarize(&self, tr: &Trajectory) -> NormSummary {
        let n = tr.mids.len();
        let mut cols = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut buf = vec![ZERO; self.a0.len()];
        for k in 0..n {
            if self.weights[k] == 0.0 {
                continue;
            }
            let u = &tr.mids[k];
            cols[0][k] = self.lq_of_coeffs(u);
            cols[1][k] = self.lq_of_coeffs(&tr.deriv[k]);
            for ((b, a), c) in buf.iter_mut().zip(&self.a0).zip(u) {
                *b = a * c;
            }
            cols[2][k] = self.lq_of_coeffs(&buf);
            cols[3][k] = self.lq_of_coeffs(&tr.op[k]);
            let (full, semi) = self.sob.norms_from_coeffs(u);
            cols[4][k] = full;
            cols[5][k] = semi;
            cols[6][k] = self.lq_of_coeffs(&tr.forcing[k]);
        }
        let u_prime = self.time_norm(&cols[1]);
        let sobolev = self.time_norm(&cols[4]);
        NormSummary {
            u: self.time_norm(&cols[0]),
            u_prime,
            a0u: self.time_norm(&cols[2]),
            au: self.time_norm(&cols[3]),
            sobolev,
            sobolev_semi: self.time_norm(&cols[5]),
            mr: u_prime + sobolev,
            forcing: self.time_norm(&cols[6]),
        }
    }
}

/// Norm summaries of one trajectory under several kits sharing grid, order
/// and δ; physical-space transforms are done once per midpoint.
pub(crate) fn summarize_all(kits: &[NormKit], tr: &Trajectory) -> Vec<NormSummary> {
    let n = tr.mids.len();
    let Some(first) = kits.first() else { return Vec::new() };
    // kit i reuses the spatial columns of kit share[i] when the L^q norms agree
    let share: Vec<usize> =
        (0..kits.len()).map(|i| (0..i).find(|&j| kits[j].lq == kits[i].lq).unwrap_or(i)).collect();
    let mut cols: Vec<[Vec<f64>; 7]> = kits.iter().map(|_| std::array::from_fn(|_| vec![0.0; n])).collect();
    let m = first.sob.order();
    for k in 0..n {
        if kits.iter().all(|kit| kit.weights[k] == 0.0) {
            continue;
        }
        let u = &tr.mids[k];
        let a0u: Vec<C> = first.a0.iter().zip(u).map(|(a, c)| a * c).collect();
        let phys = [first.phys(u), first.phys(&tr.deriv[k]), first.phys(&a0u), first.phys(&tr.op[k]), first.phys(&tr.forcing[k])];
        let ders = first.sob.derivatives(u);
        for (i, kit) in kits.iter().enumerate() {
            if share[i] != i {
                continue;
            }
            let c = &mut cols[i];
            for (slot, v) in [0, 1, 2, 3, 6].into_iter().zip(&phys) {
                c[slot][k] = kit.lq.norm(v);
            }
            let (mut full, mut semi) = (0.0, 0.0);
            for (order, d) in &ders {
                let v = kit.lq.norm(d);
                full += v;
                if *order == m {
                    semi += v;
                }
            }
            c[4][k] = full;
            c[5][k] = semi;
        }
    }
    kits.iter()
        .enumerate()
        .map(|(i, kit)| {
            let c = &cols[share[i]];
            let u_prime = kit.time_norm(&c[1]);
            let sobolev = kit.time_norm(&c[4]);
            NormSummary {
                u: kit.time_norm(&c[0]),
                u_prime,
                a0u: kit.time_norm(&c[2]),
                au: kit.time_norm(&c[3]),
                sobolev,
                sobolev_semi: kit.time_norm(&c[5]),
                mr: u_prime + sobolev,
                forcing: kit.time_norm(&c[6]),
            }
        })
        .collect()
}

/// Trace bookkeeping for problems with initial values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    /// Interpolation parameter θ = 1 − (1+α)/p.
    pub theta: f64,
    pub initial_trace: f64,
    /// Trace norm of u(t) at every node.
    pub node_traces: Vec<f64>,
    pub sup_trace: f64,
    pub sup_at: f64,
    /// Largest |trace(u(t_{k+1})) − trace(u(t_k))|.
    pub max_increment: f64,
    /// ‖u‖_MR / (‖x‖_trace + ‖f‖).
    pub initial_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub norms: NormSummary,
    pub residual: f64,
    pub residual_tolerance: f64,
    pub passed: bool,
    pub trace: Option<TraceSummary>,
}

/// The serializable part of a [`SolveReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub norms: NormSummary,
    pub residual: f64,
    pub residual_tolerance: f64,
    pub passed: bool,
    pub trace: Option<TraceSummary>,
}

impl SolveReport {
    pub fn solution(&self) -> SpaceTimeField {
        self.trajectory.solution()
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            norms: self.norms,
            residual: self.residual,
            residual_tolerance: self.residual_tolerance,
            passed: self.passed,
            trace: self.trace.clone(),
        }
    }
}

/// Node interval cut at its midpoint and at interior breakpoints.
fn cut_points(breakpoints: &[f64], t0: f64, t1: f64, mid: f64) -> Vec<f64> {
    let mut cuts = vec![t0, mid, t1];
    cuts.extend(breakpoints.iter().copied().filter(|&b| b > t0 && b < t1 && b != mid));
    cuts.sort_by(f64::total_cmp);
    cuts
}

/// A(t)u as coefficients, with A taken right-continuously at t.
pub(crate) fn apply_operator(fam: &EvolutionFamily, t: f64, coeffs: &[C]) -> Vec<C> {
    let k = fam.path().slice_at(t);
    match fam.backend() {
        Backend::ModeDiagonal => fam.mode_table(k).iter().zip(coeffs).map(|(s, c)| s * c).collect(),
        Backend::Dense => {
            let mut y = vec![ZERO; coeffs.len()];
            fam.operator(k).apply_coeffs(coeffs, &mut y);
            fam.grid().spectral().forward(&mut y);
            y
        }
    }
}

/// One exact step per mode; returns the normalized residual of the
/// integrated equation over the step.
fn mode_step(table: &[C], lambda: f64, s: f64, u: &mut [C], fa: &[C], fb: &[C]) -> f64 {
    let (mut r2, mut u02, mut u12) = (0.0, 0.0, 0.0);
    for i in 0..u.len() {
        let mu = lambda + table[i];
        let (e, p1, p2, p3) = phi123(-mu * s);
        let g = fb[i] - fa[i];
        let u0 = u[i];
        let u1 = e * u0 + s * p1 * fa[i] + s * p2 * g;
        let res = u1 - u0 - s * fa[i] - 0.5 * s * g + mu * (s * p1 * u0 + s * s * p2 * fa[i] + s * s * p3 * g);
        r2 += res.norm_sqr();
        u02 += u0.norm_sqr();
        u12 += u1.norm_sqr();
        u[i] = u1;
    }
    r2.sqrt() / (u02.sqrt() + u12.sqrt() + s * (l2(fa) + l2(fb)) + s)
}

/// One step of the dense backend on physical values through the augmented
/// generator acting on [u; κr; κ; ∫u].
fn dense_step(fam: &EvolutionFamily, slice: usize, lambda: f64, s: f64, u: &mut [C], fa: &[C], fb: &[C]) -> Result<f64> {
    let op = fam.operator(slice);
    let n = u.len();
    let g: Vec<C> = fb.iter().zip(fa).map(|(b, a)| b - a).collect();
    let kappa = l2(fa).max(l2(&g) / s).max(l2(u)).max(f64::MIN_POSITIVE);
    let ca = C::new(1.0 / kappa, 0.0);
    let cg = C::new(1.0 / (kappa * s), 0.0);
    let mut x = vec![ZERO; 2 * n + 2];
    x[..n].copy_from_slice(u);
    x[n + 1] = C::new(kappa, 0.0);
    let bound = lambda.abs() + op.norm_bound() + l2(fa) / kappa + l2(&g) / (kappa * s) + 2.0;
    let mut au = vec![ZERO; n];
    let apply = |x: &[C], y: &mut [C]| {
        let (xu, rest) = x.split_at(n);
        op.apply(xu, &mut au);
        let (y2, y3) = (rest[0], rest[1]);
        for i in 0..n {
            y[i] = -(au[i] + lambda * xu[i]) + fa[i] * ca * y3 + g[i] * cg * y2;
            y[n + 2 + i] = xu[i];
        }
        y[n] = y3;
        y[n + 1] = ZERO;
    };
    let out = expmv(apply, bound, s, &x, 1e-15)?;
    let u1 = &out[..n];
    let integral = &out[n + 2..];
    let mut bi = vec![ZERO; n];
    op.apply(integral, &mut bi);
    let res: Vec<C> = (0..n)
        .map(|i| u1[i] - u[i] - s * fa[i] - 0.5 * s * g[i] + bi[i] + lambda * integral[i])
        .collect();
    let scale = l2(u) + l2(u1) + s * (l2(fa) + l2(fb)) + s;
    u.copy_from_slice(u1);
    Ok(l2(&res) / scale)
}

pub(crate) fn integrate(prob: &MRProblem) -> Result<(Trajectory, f64)> {
    let fam = &prob.family;
    let grid = fam.grid();
    let sp = grid.spectral();
    let times = prob.forcing.times().to_vec();
    let lam = prob.lambda;
    let bps = fam.path().breakpoints();
    let dense = fam.backend() == Backend::Dense;
    // Forcing values in the representation the backend steps in.
    let fvals: Vec<Vec<C>> = prob
        .forcing
        .slices()
        .iter()
        .map(|f| if dense { f.values().to_vec() } else { f.coeffs() })
        .collect();
    let mut state: Vec<C> = match (&prob.initial, dense) {
        (Some(x), true) => x.values().to_vec(),
        (Some(x), false) => x.coeffs(),
        (None, _) => vec![ZERO; grid.len()],
    };
    let to_coeffs = |v: &[C]| -> Vec<C> {
        if dense {
            let mut c = v.to_vec();
            sp.forward(&mut c);
            c
        } else {
            v.to_vec()
        }
    };
    let nk = times.len() - 1;
    let mut nodes = Vec::with_capacity(nk + 1);
    let mut mids = Vec::with_capacity(nk);
    let mut residual: f64 = 0.0;
    nodes.push(to_coeffs(&state));
    for k in 0..nk {
        let (t0, t1) = (times[k], times[k + 1]);
        let mid = 0.5 * (t0 + t1);
        let cuts = cut_points(bps, t0, t1, mid);
        let mut mid_state = None;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let fa = lerp(&fvals[k], &fvals[k + 1], (a - t0) / (t1 - t0));
            let fb = lerp(&fvals[k], &fvals[k + 1], (b - t0) / (t1 - t0));
            let slice = fam.path().slice_at(0.5 * (a + b));
            let r = if dense {
                dense_step(fam, slice, lam, b - a, &mut state, &fa, &fb)?
            } else {
                mode_step(fam.mode_table(slice), lam, b - a, &mut state, &fa, &fb)
            };
            residual = residual.max(r);
            if b == mid {
                mid_state = Some(to_coeffs(&state));
            }
        }
        if state.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(LabError::Numeric(format!("solution blew up on [{t0}, {t1}]")));
        }
        mids.push(mid_state.expect("midpoint is always a cut"));
        nodes.push(to_coeffs(&state));
    }
    let fco: Vec<Vec<C>> = if dense {
        prob.forcing.slices().iter().map(|f| f.coeffs()).collect()
    } else {
        fvals
    };
    let mut deriv = Vec::with_capacity(nk);
    let mut ops = Vec::with_capacity(nk);
    let mut forcing = Vec::with_capacity(nk);
    for k in 0..nk {
        let mid = 0.5 * (times[k] + times[k + 1]);
        let f_mid = lerp(&fco[k], &fco[k + 1], 0.5);
        let op = apply_operator(fam, mid, &mids[k]);
        let d: Vec<C> = (0..grid.len()).map(|i| f_mid[i] - lam * mids[k][i] - op[i]).collect();
        deriv.push(d);
        ops.push(op);
        forcing.push(f_mid);
    }
    Ok((Trajectory { grid, times, nodes, mids, deriv, op: ops, forcing }, residual))
}

pub fn mild_solve(prob: &MRProblem) -> Result<SolveReport> {
    let (trajectory, residual) = integrate(prob)?;
    let norms = prob.norm_kit()?.summarize(&trajectory);
    let tol = prob.tolerance();
    Ok(SolveReport {
        trajectory,
        norms,
        residual,
        residual_tolerance: tol,
        passed: residual <= tol,
        trace: None,
    })
}

/// Mild solve plus trace bookkeeping in X_{v,p} = (L^q, W^{m,q})_{θ,p}.
pub fn solve_with_initial(prob: &MRProblem) -> Result<SolveReport> {
    let mut rep = mild_solve(prob)?;
    let alpha = prob.time_weight.map_or(0.0, |v| v.exponent);
    let theta = 1.0 - (1.0 + alpha) / prob.p;
    let m = prob.family.path().order();
    let grid = prob.family.grid();
    let initial_trace = match &prob.initial {
        Some(x) => x.trace_norm_oracle(theta, prob.q, prob.p, m)?,
        None => 0.0,
    };
    if !initial_trace.is_finite() {
        return input("initial value has no finite trace norm");
    }
    let node_traces = rep
        .trajectory
        .nodes
        .iter()
        .map(|c| GridField::from_coeffs(grid, c.clone()).trace_norm_oracle(theta, prob.q, prob.p, m))
        .collect::<Result<Vec<f64>>>()?;
    let (mut sup_trace, mut sup_at) = (0.0, rep.trajectory.times[0]);
    for (t, v) in rep.trajectory.times.iter().zip(&node_traces) {
        if *v > sup_trace {
            sup_trace = *v;
            sup_at = *t;
        }
    }
    let max_increment = node_traces.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let denom = initial_trace + rep.norms.forcing;
    rep.trace = Some(TraceSummary {
        theta,
        initial_trace,
        node_traces,
        sup_trace,
        sup_at,
        max_increment,
        initial_ratio: if denom > 0.0 { rep.norms.mr / denom } else { 0.0 },
    });
    Ok(rep)
}

/// Evenly spaced nodes on [a, b].
pub fn uniform_nodes(a: f64, b: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| if k == steps { b } else { a + (b - a) * k as f64 / steps as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::CoefficientPath;
    use crate::symbol::EllipticSymbol;
    use approx::assert_relative_eq;

    fn heat_family(n: usize, backend: Backend, a: f64) -> Arc<EvolutionFamily> {
        let g = TorusGrid::new(1, n).unwrap();
        let sym = EllipticSymbol::laplacian_power(1, 2, C::new(a, 0.0)).unwrap();
        let path = CoefficientPath::constant(sym, 0.0, 1.0).unwrap();
        Arc::new(EvolutionFamily::new(g, path, backend, 1.0).unwrap())
    }

    #[test]
    fn phi_functions_agree_across_the_switch() {
        for z in [C::new(0.49, 0.0), C::new(-0.3, 0.35), C::new(0.0, 0.499)] {
            let (e, p1, p2, p3) = phi123(z);
            let (e2, q1, q2, q3) = phi123(z * 1.0000001);
            assert!((e - e2).norm() < 1e-6 && (p1 - q1).norm() < 1e-6);
            assert!((p2 - q2).norm() < 1e-6 && (p3 - q3).norm() < 1e-6);
        }
        let z = C::new(0.5, 0.0);
        let (_, p1, p2, p3) = phi123(z);
        let e = z.exp();
        assert_relative_eq!(p1.re, (e.re - 1.0) / 0.5, max_relative = 1e-14);
        assert_relative_eq!(p2.re, (e.re - 1.5) / 0.25, max_relative = 1e-13);
        assert_relative_eq!(p3.re, (e.re - 1.5 - 0.125) / 0.125, max_relative = 1e-12);
        let (_, s1, s2, s3) = phi123(C::new(1e-9, 0.0));
        assert_relative_eq!(s1.re, 1.0, max_relative = 1e-8);
        assert_relative_eq!(s2.re, 0.5, max_relative = 1e-8);
        assert_relative_eq!(s3.re, 1.0 / 6.0, max_relative = 1e-8);
    }

    #[test]
    fn heat_closed_form() {
        for backend in [Backend::ModeDiagonal, Backend::Dense] {
            let fam = heat_family(32, backend, 1.0);
            let g = fam.grid();
            let times = uniform_nodes(0.0, 1.0, 200);
            let f = SpaceTimeField::from_fn(g, &times, |_, x| C::from_polar(1.0, x[0])).unwrap();
            let prob = MRProblem::new(fam, 0.0, f, 2.0, 2.0).unwrap();
            let rep = mild_solve(&prob).unwrap();
            assert!(rep.passed, "{backend:?} residual {}", rep.residual);
            let c = rep.trajectory.node_coeffs().last().unwrap()[1];
            assert_relative_eq!(c.re, 1.0 - (-1.0f64).exp(), max_relative = 1e-10);
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_operator_scalar_ode() {
        // A ≡ 0 is not elliptic, so take a ≡ 1 and f ≡ 1: the zero mode only
        // sees λ.
        let fam = heat_family(16, Backend::ModeDiagonal, 1.0);
        let g = fam.grid();
        let times = uniform_nodes(0.0, 2.0, 10);
        let f = SpaceTimeField::from_fn(g, &times, |_, _| C::new(1.0, 0.0)).unwrap();
        let lam = 0.7;
        let rep = mild_solve(&MRProblem::new(fam, lam, f, 2.0, 2.0).unwrap()).unwrap();
        for (t, c) in times.iter().zip(rep.trajectory.node_coeffs()) {
            assert_relative_eq!(c[0].re, (1.0 - (-lam * t).exp()) / lam, max_relative = 1e-13, epsilon = 1e-15);
        }
    }

    #[test]
    fn free_evolution_matches_propagate() {
        let fam = heat_family(16, Backend::ModeDiagonal, 1.0);
        let g = fam.grid();
        let x = GridField::from_fn(g, |x| C::new(x[0].sin() + 0.3 * (3.0 * x[0]).cos(), 0.0));
        let times = uniform_nodes(0.0, 1.0, 8);
        let prob = MRProblem::new(fam.clone(), 0.0, SpaceTimeField::zeros(g, &times).unwrap(), 2.0, 2.0)
            .unwrap()
            .with_initial(x.clone())
            .unwrap();
        let rep = solve_with_initial(&prob).unwrap();
        let want = fam.propagate(0.0, 1.0, &x).unwrap();
        assert!(rep.solution().last().sub(&want).unwrap().max_abs() < 1e-14);
        let tr = rep.trace.unwrap();
        assert_eq!(tr.sup_at, 0.0);
    }

    #[test]
    fn non_elliptic_is_rejected() {
        let g = TorusGrid::new(1, 16).unwrap();
        let sym = EllipticSymbol::laplacian_power(1, 2, C::new(-1.0, 0.0)).unwrap();
        let path = CoefficientPath::constant(sym, 0.0, 1.0).unwrap();
        let fam = Arc::new(EvolutionFamily::new(g, path, Backend::ModeDiagonal, 1.0).unwrap());
        let times = uniform_nodes(0.0, 1.0, 4);
        let err = MRProblem::new(fam, 0.0, SpaceTimeField::zeros(g, &times).unwrap(), 2.0, 2.0);
        assert!(matches!(err, Err(LabError::NotElliptic(_))));
    }
}

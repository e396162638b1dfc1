//! Rademacher sampling of R-bounds for families of integral operators
//!
//!   I_{kT} f(t) = ∫ k(t − s) T(t, s) f(s) ds
//!
//! acting on L^p_v(J; L^q(𝕋^d)), plus the uniform-boundedness check
//! against the maximal operator.

use crate::error::{input, LabError, Result};
use crate::evolution::{Backend, EvolutionFamily};
use crate::field::{abs_pow, GridField, LqNorm, SpaceTimeField, TorusGrid};
use crate::rng;
use crate::weights::{maximal_operator, BoxGrid, Kernel1D, PowerWeight, Support};
use crate::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C = C::new(0.0, 0.0);
/// Time grids are capped at this many cells.
pub const MAX_TIME_CELLS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorKind {
    /// T ≡ I.
    Identity,
    /// T(t, s) = θ_j(t, s) I with θ_j = bound·cos(a_j t + b_j s + φ_j), j < count.
    Scalar { bound: f64, count: usize },
    /// T(t, s) = S(t, s) from an x-independent evolution family.
    Evolution,
    /// T_j = m_j(D), fixed in time and applied without time convolution;
    /// |m_j| ≤ bound, j < size.
    Diagonal { bound: f64, size: usize },
}

/// Operator n of a draw: kernel index and family member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorChoice {
    pub kernel: usize,
    pub member: usize,
}

#[derive(Clone)]
pub struct OperatorFamily {
    kind: OperatorKind,
    kernels: Vec<Kernel1D>,
    grid: TorusGrid,
    start: f64,
    dt: f64,
    cells: usize,
    p: f64,
    q: f64,
    weight: Option<PowerWeight>,
    seed: u64,
    evolution: Option<Arc<EvolutionFamily>>,
    /// Cumulative mode exponents ∫_a^{t_i} σ at cell centres.
    exponents: Vec<Vec<C>>,
    lq: LqNorm,
}

impl OperatorFamily {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: OperatorKind,
        kernels: Vec<Kernel1D>,
        grid: TorusGrid,
        start: f64,
        end: f64,
        cells: usize,
        p: f64,
        q: f64,
        weight: Option<PowerWeight>,
        seed: u64,
    ) -> Result<Self> {
        if cells == 0 || cells > MAX_TIME_CELLS {
            return input(format!("time grid needs 1..={MAX_TIME_CELLS} cells, got {cells}"));
        }
        if !(end > start) {
            return input("time interval is empty");
        }
        if !(p >= 1.0 && p.is_finite()) {
            return input(format!("p must lie in [1, ∞), got {p}"));
        }
        if let Some(v) = weight {
            if !v.is_ap(p) {
                return input(format!("power weight α = {} is not in A_p for p = {p}", v.exponent));
            }
        }
        let uses_kernels = !matches!(kind, OperatorKind::Diagonal { .. });
        if uses_kernels && kernels.is_empty() {
            return input("kernel list is empty");
        }
        for k in &kernels {
            k.validate()?;
            let c = k.class_constant()?;
            if c > 1.0 + 1e-6 {
                return input(format!("kernel {k:?} has class constant {c} > 1"));
            }
        }
        match kind {
            OperatorKind::Scalar { bound, count } if !(bound >= 0.0 && bound.is_finite()) || count == 0 => {
                return input("scalar family needs a finite bound and count ≥ 1");
            }
            OperatorKind::Diagonal { bound, size } if !(bound >= 0.0 && bound.is_finite()) || size == 0 => {
                return input("diagonal family needs a finite bound and size ≥ 1");
            }
            OperatorKind::Evolution if kernels.iter().any(|k| k.support() != Support::OneSided) => {
                return Err(LabError::Unsupported("evolution families need one-sided kernels".into()));
            }
            _ => {}
        }
        let lq = LqNorm::new(grid, q, None)?;
        Ok(Self {
            kind,
            kernels,
            grid,
            start,
            dt: (end - start) / cells as f64,
            cells,
            p,
            q,
            weight,
            seed,
            evolution: None,
            exponents: Vec::new(),
            lq,
        })
    }

    /// Attach the evolution family used by `OperatorKind::Evolution`.
    pub fn with_evolution(mut self, fam: Arc<EvolutionFamily>) -> Result<Self> {
        if fam.grid() != self.grid {
            return input("evolution family lives on a different grid");
        }
        if fam.backend() != Backend::ModeDiagonal {
            return Err(LabError::Unsupported("operator families need the mode-diagonal backend".into()));
        }
        fam.parabolic()?;
        let a = self.start;
        self.exponents = self.times().iter().map(|&t| fam.mode_exponent(a, t)).collect::<Result<_>>()?;
        self.evolution = Some(fam);
        Ok(self)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn kernels(&self) -> &[Kernel1D] {
        &self.kernels
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

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Cell centres.
    pub fn times(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.start + (i as f64 + 0.5) * self.dt).collect()
    }

    /// Same family restricted to a subset of kernels.
    pub fn with_kernels(&self, kernels: Vec<Kernel1D>) -> Result<Self> {
        let mut out = Self::new(
            self.kind,
            kernels,
            self.grid,
            self.start,
            self.start + self.dt * self.cells as f64,
            self.cells,
            self.p,
            self.q,
            self.weight,
            self.seed,
        )?;
        if let Some(f) = &self.evolution {
            out = out.with_evolution(f.clone())?;
        }
        Ok(out)
    }

    pub fn members(&self) -> usize {
        match self.kind {
            OperatorKind::Scalar { count, .. } => count,
            OperatorKind::Diagonal { size, .. } => size,
            _ => 1,
        }
    }

    fn theta(&self, member: usize) -> impl Fn(f64, f64) -> f64 {
        let (bound, a, b, phi) = match self.kind {
            OperatorKind::Scalar { bound, .. } => {
                let mut g = rng::stream(self.seed, rng::tag::OPERATOR, member as u64);
                let a = 40.0 * g.random::<f64>() - 20.0;
                let b = 40.0 * g.random::<f64>() - 20.0;
                (bound, a, b, 2.0 * PI * g.random::<f64>())
            }
            _ => (1.0, 0.0, 0.0, 0.0),
        };
        move |t, s| bound * (a * t + b * s + phi).cos()
    }

    /// Multiplier table m_j(ξ) of a diagonal member.
    pub fn diagonal_table(&self, member: usize) -> Vec<C> {
        let bound = match self.kind {
            OperatorKind::Diagonal { bound, .. } => bound,
            _ => 1.0,
        };
        let mut g = rng::stream(self.seed, rng::tag::OPERATOR, member as u64);
        (0..self.grid.len())
            .map(|_| C::from_polar(bound * g.random::<f64>(), 2.0 * PI * g.random::<f64>()))
            .collect()
    }

    /// Exact sup_j ‖m_j(D)‖ on L² for diagonal families.
    pub fn diagonal_sup(&self) -> f64 {
        (0..self.members())
            .map(|j| self.diagonal_table(j).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// ‖f‖ in L^p_v(J; L^q) from physical values per cell.
    pub fn norm(&self, cells: &[Vec<C>]) -> f64 {
        let times = self.times();
        let s: f64 = cells
            .iter()
            .zip(&times)
            .map(|(c, &t)| self.dt * self.weight.map_or(1.0, |v| v.eval(t)) * self.lq.norm(c).powf(self.p))
            .sum();
        s.powf(1.0 / self.p)
    }

    fn check_field(&self, f: &SpaceTimeField) -> Result<()> {
        if f.grid() != self.grid {
            return input("field lives on a different grid");
        }
        if f.times().len() != self.cells {
            return Err(LabError::Dimension { expected: self.cells, got: f.times().len() });
        }
        Ok(())
    }

    /// Physical values of I_{kT} f per time cell.
    fn apply_cells(&self, choice: OperatorChoice, f: &[Vec<C>]) -> Result<Vec<Vec<C>>> {
        let n = self.cells;
        let sp = self.grid.spectral();
        if let OperatorKind::Diagonal { .. } = self.kind {
            let table = self.diagonal_table(choice.member);
            return Ok(f
                .iter()
                .map(|v| {
                    let mut c = v.clone();
                    sp.forward(&mut c);
                    for (x, m) in c.iter_mut().zip(&table) {
                        *x *= m;
                    }
                    sp.inverse(&mut c);
                    c
                })
                .collect());
        }
        let k = self.kernels.get(choice.kernel).ok_or_else(|| LabError::Input("kernel index out of range".into()))?;
        let tab = k.tabulate(self.dt, n)?;
        let times = self.times();
        let len = self.grid.len();
        let mut out = vec![vec![ZERO; len]; n];
        match self.kind {
            OperatorKind::Evolution => {
                if self.evolution.is_none() {
                    return input("evolution operator family has no evolution attached");
                }
                let coeffs: Vec<Vec<C>> = f
                    .iter()
                    .map(|v| {
                        let mut c = v.clone();
                        sp.forward(&mut c);
                        c
                    })
                    .collect();
                for i in 0..n {
                    let o = &mut out[i];
                    for j in 0..=i {
                        let w = tab[i - j];
                        if w == 0.0 {
                            continue;
                        }
                        for m in 0..len {
                            o[m] += w * (self.exponents[j][m] - self.exponents[i][m]).exp() * coeffs[j][m];
                        }
                    }
                    sp.inverse(o);
                }
            }
            _ => {
                let theta = self.theta(choice.member);
                let weight = |i: usize, j: usize| -> f64 {
                    let w = match k.support() {
                        Support::OneSided if j <= i => tab[i - j],
                        Support::OneSided => 0.0,
                        Support::Symmetric => tab[(n - 1 + i) - j],
                    };
                    if w == 0.0 {
                        0.0
                    } else {
                        w * theta(times[i], times[j])
                    }
                };
                for i in 0..n {
                    let o = &mut out[i];
                    for j in 0..n {
                        let w = weight(i, j);
                        if w != 0.0 {
                            for (x, y) in o.iter_mut().zip(&f[j]) {
                                *x += w * y;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Measured sup over cell pairs of ‖T(t, s)‖ on L^q. Multiplier
    /// operators are bounded by the ℓ¹ mass of their convolution kernel,
    /// and on L² by sup|m|.
    pub fn operator_sup(&self) -> f64 {
        let mult_norm = |m: &[C]| -> f64 {
            let sup = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut k = m.to_vec();
            self.grid.spectral().inverse(&mut k);
            let mass = k.iter().map(|z| z.norm()).sum::<f64>() / self.grid.len() as f64;
            if self.q == 2.0 {
                sup.min(mass)
            } else {
                mass
            }
        };
        match self.kind {
            OperatorKind::Identity => 1.0,
            OperatorKind::Scalar { bound, .. } => bound,
            OperatorKind::Diagonal { .. } => {
                (0..self.members()).map(|j| mult_norm(&self.diagonal_table(j))).fold(0.0, f64::max)
            }
            OperatorKind::Evolution => {
                let mut best: f64 = 1.0;
                for i in 0..self.cells {
                    for j in 0..i {
                        let m: Vec<C> = self.exponents[j]
                            .iter()
                            .zip(&self.exponents[i])
                            .map(|(a, b)| (a - b).exp())
                            .collect();
                        best = best.max(mult_norm(&m));
                    }
                }
                best
            }
        }
    }
}

fn to_cells(f: &SpaceTimeField) -> Vec<Vec<C>> {
    f.slices().iter().map(|s| s.values().to_vec()).collect()
}

fn from_cells(grid: TorusGrid, times: Vec<f64>, cells: Vec<Vec<C>>) -> Result<SpaceTimeField> {
    let slices = cells.into_iter().map(|c| GridField::new(grid, c)).collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(times, slices)
}

/// g(t_i) = Σ_j k(t_i − t_j) T(t_i, t_j) f(t_j) with k integrated over cells.
pub fn apply_ikt(fam: &OperatorFamily, choice: OperatorChoice, f: &SpaceTimeField) -> Result<SpaceTimeField> {
    fam.check_field(f)?;
    let out = fam.apply_cells(choice, &to_cells(f))?;
    from_cells(fam.grid, fam.times(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeShape {
    /// Independent band-limited fields in every cell.
    Random,
    /// A single Fourier mode, constant in time.
    Modes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignMode {
    /// All 2^N patterns (N ≤ 20).
    Exhaustive,
    MonteCarlo { samples: usize },
}

/// Seeded probe x_n on the family's grid.
pub fn draw_probe(fam: &OperatorFamily, shape: ProbeShape, seed: u64, index: u64) -> Result<SpaceTimeField> {
    let grid = fam.grid;
    let mut g = rng::stream(seed, rng::tag::PROBE, index);
    let half = grid.n() / 2;
    let cells: Vec<Vec<C>> = match shape {
        ProbeShape::Modes => {
            let k: Vec<i64> = (0..grid.dim()).map(|_| g.random_range(-(half as i64)..half as i64)).collect();
            let amp = C::from_polar(1.0, 2.0 * PI * g.random::<f64>());
            let v = GridField::mode(grid, &k, amp)?.into_values();
            vec![v; fam.cells]
        }
        ProbeShape::Random => {
            let band = g.random_range(1..=half.max(1)) as f64;
            let freqs = grid.frequencies();
            (0..fam.cells)
                .map(|_| {
                    let c = freqs
                        .iter()
                        .map(|xi| {
                            if xi.iter().all(|v| v.abs() <= band) {
                                let re: f64 = g.sample(StandardNormal);
                                let im: f64 = g.sample(StandardNormal);
                                C::new(re, im)
                            } else {
                                ZERO
                            }
                        })
                        .collect();
                    GridField::from_coeffs(grid, c).into_values()
                })
                .collect()
        }
    };
    from_cells(grid, fam.times(), cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundEstimate {
    pub n: usize,
    pub draws: usize,
    pub signs: SignMode,
    /// Sign patterns evaluated per draw.
    pub patterns: usize,
    /// Per-draw ratio (E‖Σ r_n T_n x_n‖²)^{1/2} / (E‖Σ r_n x_n‖²)^{1/2}.
    pub per_draw: Vec<f64>,
    /// Largest ‖T_n x_n‖/‖x_n‖ seen (the N = 1 floor).
    pub single_max: f64,
    /// R̂: largest of the draw ratios and the single ratios. A lower
    /// estimate of the R-bound.
    pub estimate: f64,
    /// Heuristic upper envelope 1.5·R̂.
    pub envelope: f64,
    /// (min, max) of the per-draw ratios.
    pub band: (f64, f64),
    /// Largest (E‖S‖^p)^{1/p} / (E‖S‖²)^{1/2} over all sampled sums S.
    pub kahane_factor: f64,
}

fn sign_patterns(n: usize, mode: SignMode, seed: u64, draw: u64) -> Result<Vec<Vec<f64>>> {
    match mode {
        SignMode::Exhaustive => {
            if n > 20 {
                return input("exhaustive sign enumeration is limited to N ≤ 20");
            }
            // ε₁ = +1: the other half only flips the sign of the sum
            Ok((0..1usize << (n - 1))
                .map(|bits| {
                    (0..n).map(|i| if i > 0 && (bits >> (i - 1)) & 1 == 1 { -1.0 } else { 1.0 }).collect()
                })
                .collect())
        }
        SignMode::MonteCarlo { samples } => {
            if samples == 0 {
                return input("Monte-Carlo needs at least one sign sample");
            }
            let mut g = rng::stream(seed, rng::tag::SIGN, draw);
            Ok((0..samples).map(|_| (0..n).map(|_| if g.random::<bool>() { 1.0 } else { -1.0 }).collect()).collect())
        }
    }
}

/// (E‖S‖², E‖S‖^p) over the patterns, S = Σ ε_n v_n.
fn moments(fam: &OperatorFamily, vs: &[Vec<Vec<C>>], patterns: &[Vec<f64>]) -> (f64, f64) {
    let (mut m2, mut mp) = (0.0, 0.0);
    let cells = vs[0].len();
    let len = vs[0][0].len();
    let mut sum = vec![vec![ZERO; len]; cells];
    for eps in patterns {
        for (i, row) in sum.iter_mut().enumerate() {
            for (m, x) in row.iter_mut().enumerate() {
                *x = vs.iter().zip(eps).map(|(v, e)| v[i][m] * *e).sum();
            }
        }
        let nrm = fam.norm(&sum);
        m2 += nrm * nrm;
        mp += nrm.powf(fam.p);
    }
    let k = patterns.len() as f64;
    (m2 / k, mp / k)
}

/// Estimates the smallest C with
///   (E‖Σ r_n T_n x_n‖²)^{1/2} ≤ C (E‖Σ r_n x_n‖²)^{1/2}
/// by drawing N operators and N probes per draw and maximizing over draws.
pub fn rbound_sample(
    fam: &OperatorFamily,
    n: usize,
    draws: usize,
    shape: ProbeShape,
    signs: SignMode,
    seed: u64,
) -> Result<RBoundEstimate> {
    if n == 0 || draws == 0 {
        return input("R-bound sampling needs N ≥ 1 and at least one draw");
    }
    let nk = fam.kernels.len().max(1);
    let mut per_draw = Vec::with_capacity(draws);
    let mut single_max: f64 = 0.0;
    let mut kahane: f64 = 1.0;
    let mut patterns_used = 0;
    for d in 0..draws {
        let mut g = rng::stream(seed, rng::tag::OPERATOR, 1_000_000 + d as u64);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let choice = OperatorChoice { kernel: g.random_range(0..nk), member: g.random_range(0..fam.members()) };
            let x = to_cells(&draw_probe(fam, shape, seed, (d * n + i) as u64)?);
            let xn = fam.norm(&x);
            if xn == 0.0 {
                return input("degenerate probe: all zero");
            }
            let y = fam.apply_cells(choice, &x)?;
            single_max = single_max.max(fam.norm(&y) / xn);
            xs.push(x);
            ys.push(y);
        }
        let pats = sign_patterns(n, signs, seed, d as u64)?;
        patterns_used = pats.len();
        let (x2, xp) = moments(fam, &xs, &pats);
        let (y2, yp) = moments(fam, &ys, &pats);
        if x2 == 0.0 {
            return input("degenerate probe set: Rademacher sum vanishes");
        }
        per_draw.push((y2 / x2).sqrt());
        for (m2, mp) in [(x2, xp), (y2, yp)] {
            if m2 > 0.0 {
                let r = mp.powf(1.0 / fam.p) / m2.sqrt();
                kahane = kahane.max(r.max(1.0 / r));
            }
        }
    }
    let lo = per_draw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_draw.iter().copied().fold(0.0, f64::max);
    let estimate = hi.max(single_max);
    Ok(RBoundEstimate {
        n,
        draws,
        signs,
        patterns: patterns_used,
        per_draw,
        single_max,
        estimate,
        envelope: 1.5 * estimate,
        band: (lo, hi),
        kahane_factor: kahane,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    /// max over kernels, members and probes of ‖I_{kT} f‖ / ‖f‖.
    pub bound: f64,
    /// Measured sup ‖T(t, s)‖.
    pub operator_sup: f64,
    /// max over probes of ‖M φ‖ / ‖φ‖ with φ(t) = ‖f(t)‖_q.
    pub maximal: f64,
    /// bound ≤ operator_sup · maximal.
    pub within: bool,
}

/// Uniform bound of the family over the given probes, checked against the
/// measured ‖T‖_∞ times the maximal-operator ratio of the same probes.
pub fn uniform_bound_check(fam: &OperatorFamily, probes: &[SpaceTimeField]) -> Result<UniformBound> {
    if probes.is_empty() {
        return input("uniform bound needs probes");
    }
    let line = BoxGrid::line(fam.start, fam.start + fam.dt * fam.cells as f64, fam.cells)?;
    let times = fam.times();
    let wts: Vec<f64> = times.iter().map(|&t| fam.dt * fam.weight.map_or(1.0, |v| v.eval(t))).collect();
    let scalar_norm = |phi: &[f64]| -> f64 {
        phi.iter().zip(&wts).map(|(x, w)| w * x.powf(fam.p)).sum::<f64>().powf(1.0 / fam.p)
    };
    let mut bound: f64 = 0.0;
    let mut maximal: f64 = 0.0;
    let nk = if matches!(fam.kind, OperatorKind::Diagonal { .. }) { 1 } else { fam.kernels.len() };
    for f in probes {
        fam.check_field(f)?;
        let x = to_cells(f);
        let xn = fam.norm(&x);
        if xn == 0.0 {
            continue;
        }
        let phi: Vec<f64> = x.iter().map(|c| fam.lq.norm(c)).collect();
        let mphi = maximal_operator(&line, &phi)?;
        maximal = maximal.max(scalar_norm(&mphi) / scalar_norm(&phi));
        for kernel in 0..nk {
            for member in 0..fam.members() {
                let y = fam.apply_cells(OperatorChoice { kernel, member }, &x)?;
                bound = bound.max(fam.norm(&y) / xn);
            }
        }
    }
    let operator_sup = fam.operator_sup();
    let within = bound <= operator_sup * maximal * (1.0 + 1e-9);
    Ok(UniformBound { bound, operator_sup, maximal, within })
}

/// ‖·‖_q of every cell raised to q, summed: used for Kahane comparisons in
/// tests of individual sums.
pub fn cell_pow_sum(values: &[C], q: f64) -> f64 {
    values.iter().map(|z| abs_pow(*z, q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::KernelShape;

    fn family(kind: OperatorKind, kernels: Vec<Kernel1D>) -> OperatorFamily {
        let g = TorusGrid::new(1, 8).unwrap();
        OperatorFamily::new(kind, kernels, g, 0.0, 1.0, 32, 2.0, 2.0, None, 5).unwrap()
    }

    #[test]
    fn zero_input_gives_zero() {
        let k = Kernel1D::new(KernelShape::Exponential, 0.1).unwrap();
        let fam = family(OperatorKind::Scalar { bound: 1.0, count: 3 }, vec![k]);
        let f = SpaceTimeField::zeros(fam.grid(), &fam.times()).unwrap();
        let g = apply_ikt(&fam, OperatorChoice { kernel: 0, member: 1 }, &f).unwrap();
        assert!(g.slices().iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn single_operator_estimate_is_norm_ratio() {
        let k = Kernel1D::new(KernelShape::Box, 0.2).unwrap();
        let fam = family(OperatorKind::Identity, vec![k]);
        let est = rbound_sample(&fam, 1, 3, ProbeShape::Random, SignMode::Exhaustive, 1).unwrap();
        assert_eq!(est.patterns, 1);
        for r in &est.per_draw {
            assert!(*r <= est.single_max + 1e-12);
        }
        assert!((est.estimate - est.single_max).abs() < 1e-12);
    }

    #[test]
    fn evolution_needs_one_sided_kernels() {
        let k = Kernel1D::new(KernelShape::Gaussian, 0.1).unwrap();
        let g = TorusGrid::new(1, 8).unwrap();
        let r = OperatorFamily::new(OperatorKind::Evolution, vec![k], g, 0.0, 1.0, 16, 2.0, 2.0, None, 0);
        assert!(matches!(r, Err(LabError::Unsupported(_))));
    }

    #[test]
    fn time_grid_is_capped() {
        let k = Kernel1D::new(KernelShape::Box, 0.2).unwrap();
        let g = TorusGrid::new(1, 8).unwrap();
        assert!(OperatorFamily::new(OperatorKind::Identity, vec![k], g, 0.0, 1.0, 4096, 2.0, 2.0, None, 0).is_err());
    }
}

//! Piecewise-constant-in-time coefficient paths and their evolution
//! families S(t,s).

use crate::error::{check_dim, input, LabError, Result};
use crate::expm::{expm, CMatrix};
use crate::field::{GridField, TorusGrid};
use crate::rng;
use crate::symbol::{check_ellipticity, EllipticSymbol, EllipticityCertificate, MultiIndex};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

type C = Complex64;

/// Symbol whose coefficients are fields a_α(x) on the torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSymbol {
    grid: TorusGrid,
    order: u32,
    coeffs: Vec<(MultiIndex, Vec<C>)>,
}

impl FieldSymbol {
    pub fn new(grid: TorusGrid, order: u32, coeffs: Vec<(MultiIndex, Vec<C>)>) -> Result<Self> {
        if order == 0 || order % 2 == 1 {
            return input(format!("order must be a positive even integer, got {order}"));
        }
        let mut has_top = false;
        for (a, v) in &coeffs {
            check_dim(grid.dim(), a.dim())?;
            check_dim(grid.len(), v.len())?;
            if a.order() > order {
                return input(format!("coefficient {:?} exceeds order {order}", a.entries()));
            }
            if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return input("non-finite coefficient field");
            }
            if a.order() == order && v.iter().any(|z| z.norm() > 0.0) {
                has_top = true;
            }
        }
        if !has_top {
            return input("field symbol has no non-zero top-order coefficient");
        }
        Ok(Self { grid, order, coeffs })
    }

    pub fn from_symbol(grid: TorusGrid, sym: &EllipticSymbol) -> Result<Self> {
        check_dim(grid.dim(), sym.dim())?;
        let coeffs = sym.coeffs().iter().map(|(a, c)| (a.clone(), vec![*c; grid.len()])).collect();
        Self::new(grid, sym.order(), coeffs)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[(MultiIndex, Vec<C>)] {
        &self.coeffs
    }

    /// The constant-coefficient symbol at grid point `idx`.
    pub fn frozen_at(&self, idx: usize) -> Result<EllipticSymbol> {
        let mut map = BTreeMap::new();
        for (a, v) in &self.coeffs {
            *map.entry(a.clone()).or_insert(C::new(0.0, 0.0)) += v[idx];
        }
        EllipticSymbol::new(self.grid.dim(), self.order, map)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().flat_map(|(_, v)| v.iter().map(|z| z.norm())).fold(0.0, f64::max)
    }

    /// Largest oscillation of a top-order coefficient over points at torus
    /// distance ≤ ε.
    pub fn modulus(&self, eps: f64) -> f64 {
        let g = self.grid;
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.coords(i)).collect();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = (x - y).abs();
                    let d = d.min(2.0 * std::f64::consts::PI - d);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut best: f64 = 0.0;
        for (a, v) in &self.coeffs {
            if a.order() != self.order {
                continue;
            }
            for i in 0..g.len() {
                for j in (i + 1)..g.len() {
                    if dist(&pts[i], &pts[j]) <= eps + 1e-12 {
                        best = best.max((v[i] - v[j]).norm());
                    }
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SliceCoefficients {
    Constant(EllipticSymbol),
    Field(FieldSymbol),
}

impl SliceCoefficients {
    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(s) => s.dim(),
            Self::Field(f) => f.grid().dim(),
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            Self::Constant(s) => s.order(),
            Self::Field(f) => f.order(),
        }
    }

    pub fn max_coeff(&self) -> f64 {
        match self {
            Self::Constant(s) => s.max_coeff(),
            Self::Field(f) => f.max_coeff(),
        }
    }

    fn certify(&self, theta: f64, kappa: f64, k: f64, n: usize) -> Result<EllipticityCertificate> {
        match self {
            Self::Constant(s) => check_ellipticity(s, theta, kappa, k, n),
            Self::Field(f) => {
                let mut cert: Option<EllipticityCertificate> = None;
                for idx in 0..f.grid().len() {
                    let c = check_ellipticity(&f.frozen_at(idx)?, theta, kappa, k, n)?;
                    cert = Some(match cert {
                        None => c,
                        Some(prev) => prev.merge(&c),
                    });
                }
                Ok(cert.expect("grid is non-empty"))
            }
        }
    }
}

/// Measured ω(ε) for x-dependent paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub eps: Vec<f64>,
    pub omega: Vec<f64>,
}

impl ModulusTable {
    /// Linear interpolation, clamped to the table ends.
    pub fn at(&self, eps: f64) -> f64 {
        if self.eps.is_empty() {
            return 0.0;
        }
        if eps <= self.eps[0] {
            return self.omega[0];
        }
        for w in 0..self.eps.len() - 1 {
            if eps <= self.eps[w + 1] {
                let t = (eps - self.eps[w]) / (self.eps[w + 1] - self.eps[w]);
                return self.omega[w] + t * (self.omega[w + 1] - self.omega[w]);
            }
        }
        *self.omega.last().expect("non-empty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPath {
    breakpoints: Vec<f64>,
    slices: Vec<SliceCoefficients>,
    modulus: Option<ModulusTable>,
}

/// Seeded random switching of a c(t)|ξ|^m principal part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughPathSpec {
    pub dim: usize,
    pub order: u32,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub end: f64,
    pub slices: usize,
    pub modulus_min: f64,
    pub modulus_max: f64,
    /// |arg c| never exceeds this angle.
    pub max_angle: f64,
    /// Amplitude of random lower-order coefficients.
    #[serde(default)]
    pub lower_order: f64,
}

fn one() -> f64 {
    1.0
}

/// Seeded paths with x-dependent top-order part a_k(x)|ξ|^m on slice k,
/// a_k(x) = b_k + amp·sin(ν_k·x + φ_k) with b_k ∈ [base, 2·base].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPathSpec {
    #[serde(default = "two")]
    pub order: u32,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub end: f64,
    pub slices: usize,
    pub base: f64,
    pub amp: f64,
    /// |ν_k|_∞ ≤ this.
    #[serde(default = "two_usize")]
    pub max_wavenumber: usize,
}

fn two() -> u32 {
    2
}

fn two_usize() -> usize {
    2
}

impl CoefficientPath {
    pub fn new(breakpoints: Vec<f64>, slices: Vec<SliceCoefficients>) -> Result<Self> {
        if slices.is_empty() || breakpoints.len() != slices.len() + 1 {
            return input("a path needs K ≥ 1 slices and K + 1 breakpoints");
        }
        if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return input("breakpoints must be finite and strictly increasing");
        }
        let (d, m) = (slices[0].dim(), slices[0].order());
        for s in &slices {
            if s.dim() != d || s.order() != m {
                return input("all slices must share dimension and order");
            }
        }
        let grids: Vec<TorusGrid> = slices
            .iter()
            .filter_map(|s| match s {
                SliceCoefficients::Field(f) => Some(f.grid()),
                _ => None,
            })
            .collect();
        if grids.windows(2).any(|w| w[0] != w[1]) {
            return input("field slices must share one grid");
        }
        Ok(Self { breakpoints, slices, modulus: None })
    }

    pub fn constant(sym: EllipticSymbol, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![SliceCoefficients::Constant(sym)])
    }

    pub fn piecewise(breakpoints: Vec<f64>, symbols: Vec<EllipticSymbol>) -> Result<Self> {
        Self::new(breakpoints, symbols.into_iter().map(SliceCoefficients::Constant).collect())
    }

    pub fn rough(spec: &RoughPathSpec, seed: u64, index: u64) -> Result<Self> {
        if spec.slices == 0 || !(spec.end > spec.start) {
            return input("rough path needs slices ≥ 1 and end > start");
        }
        if !(spec.modulus_min > 0.0 && spec.modulus_max >= spec.modulus_min) {
            return input("rough path needs 0 < modulus_min ≤ modulus_max");
        }
        let mut r = rng::stream(seed, rng::tag::PATH, index);
        let mut inner: Vec<f64> =
            (1..spec.slices).map(|_| spec.start + (spec.end - spec.start) * r.random::<f64>()).collect();
        inner.sort_by(f64::total_cmp);
        let mut bps = vec![spec.start];
        bps.extend(inner);
        bps.push(spec.end);
        // Coincident draws would break strict monotonicity; nudge them apart.
        for k in 1..bps.len() - 1 {
            if bps[k] <= bps[k - 1] {
                bps[k] = bps[k - 1] + 1e-9 * (spec.end - spec.start);
            }
        }
        let mut symbols = Vec::with_capacity(spec.slices);
        for _ in 0..spec.slices {
            let rad = spec.modulus_min + (spec.modulus_max - spec.modulus_min) * r.random::<f64>();
            let ang = spec.max_angle * (2.0 * r.random::<f64>() - 1.0);
            let top = EllipticSymbol::laplacian_power(spec.dim, spec.order, C::from_polar(rad, ang))?;
            let mut coeffs = top.coeffs().clone();
            if spec.lower_order > 0.0 {
                for a in MultiIndex::up_to_order(spec.dim, spec.order - 1) {
                    let z = C::new(2.0 * r.random::<f64>() - 1.0, 2.0 * r.random::<f64>() - 1.0);
                    coeffs.insert(a, z * (spec.lower_order / 2f64.sqrt()));
                }
            }
            symbols.push(EllipticSymbol::new(spec.dim, spec.order, coeffs)?);
        }
        Self::piecewise(bps, symbols)
    }

    /// Field path on `grid` from a [`FieldPathSpec`], with its modulus of
    /// continuity tabulated at a few radii.
    pub fn rough_field(spec: &FieldPathSpec, grid: TorusGrid, seed: u64, index: u64) -> Result<Self> {
        if spec.slices == 0 || !(spec.end > spec.start) {
            return input("field path needs slices ≥ 1 and end > start");
        }
        if !(spec.base > spec.amp.abs()) {
            return input("field path needs base > |amp| to stay elliptic");
        }
        let mut r = rng::stream(seed, rng::tag::PATH, index);
        let mut inner: Vec<f64> =
            (1..spec.slices).map(|_| spec.start + (spec.end - spec.start) * r.random::<f64>()).collect();
        inner.sort_by(f64::total_cmp);
        let mut bps = vec![spec.start];
        bps.extend(inner);
        bps.push(spec.end);
        for k in 1..bps.len() - 1 {
            if bps[k] <= bps[k - 1] {
                bps[k] = bps[k - 1] + 1e-9 * (spec.end - spec.start);
            }
        }
        let nu_max = spec.max_wavenumber.max(1) as i64;
        let mut slices = Vec::with_capacity(spec.slices);
        for _ in 0..spec.slices {
            let b = spec.base * (1.0 + r.random::<f64>());
            let nu: Vec<f64> = (0..grid.dim()).map(|_| r.random_range(-nu_max..=nu_max) as f64).collect();
            let phase = 2.0 * std::f64::consts::PI * r.random::<f64>();
            let a: Vec<C> = (0..grid.len())
                .map(|i| {
                    let x = grid.coords(i);
                    let arg: f64 = nu.iter().zip(&x).map(|(n, x)| n * x).sum::<f64>() + phase;
                    C::new(b + spec.amp * arg.sin(), 0.0)
                })
                .collect();
            let top = EllipticSymbol::laplacian_power(grid.dim(), spec.order, C::new(1.0, 0.0))?;
            let coeffs = top
                .coeffs()
                .iter()
                .map(|(alpha, c)| (alpha.clone(), a.iter().map(|v| v * c).collect()))
                .collect();
            slices.push(SliceCoefficients::Field(FieldSymbol::new(grid, spec.order, coeffs)?));
        }
        Self::new(bps, slices)?.with_modulus(vec![0.05, 0.1, 0.2, 0.4, 0.8])
    }

    pub fn with_modulus(mut self, eps: Vec<f64>) -> Result<Self> {
        let mut omega = vec![0.0; eps.len()];
        for s in &self.slices {
            if let SliceCoefficients::Field(f) = s {
                for (o, e) in omega.iter_mut().zip(&eps) {
                    *o = f64::max(*o, f.modulus(*e));
                }
            }
        }
        self.modulus = Some(ModulusTable { eps, omega });
        Ok(self)
    }

    pub fn modulus(&self) -> Option<&ModulusTable> {
        self.modulus.as_ref()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slices(&self) -> &[SliceCoefficients] {
        &self.slices
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().expect("non-empty")
    }

    pub fn dim(&self) -> usize {
        self.slices[0].dim()
    }

    pub fn order(&self) -> u32 {
        self.slices[0].order()
    }

    pub fn is_x_independent(&self) -> bool {
        self.slices.iter().all(|s| matches!(s, SliceCoefficients::Constant(_)))
    }

    pub fn max_coeff(&self) -> f64 {
        self.slices.iter().map(|s| s.max_coeff()).fold(0.0, f64::max)
    }

    /// Slice index containing t (right-continuous; the last slice is closed).
    pub fn slice_at(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.slices.len() - 1)
    }

    /// Overlap length of [s,t] with every slice.
    pub fn overlaps(&self, s: f64, t: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if t <= s {
            return out;
        }
        for (k, w) in self.breakpoints.windows(2).enumerate() {
            let lo = if k == 0 { f64::NEG_INFINITY } else { w[0] };
            let hi = if k + 1 == self.slices.len() { f64::INFINITY } else { w[1] };
            let len = t.min(hi) - s.max(lo);
            if len > 0.0 {
                out.push((k, len));
            }
        }
        out
    }

    /// Coefficient-wise mean of A over (s, t).
    pub fn averaged_symbol(&self, s: f64, t: f64) -> Result<EllipticSymbol> {
        if !(s < t) {
            return input(format!("averaging needs s < t, got s = {s}, t = {t}"));
        }
        let syms = self.constant_symbols()?;
        let parts: Vec<(f64, &EllipticSymbol)> =
            self.overlaps(s, t).into_iter().map(|(k, len)| (len / (t - s), &syms[k])).collect();
        EllipticSymbol::weighted_sum(&parts)
    }

    pub fn constant_symbols(&self) -> Result<Vec<EllipticSymbol>> {
        self.slices
            .iter()
            .map(|s| match s {
                SliceCoefficients::Constant(sym) => Ok(sym.clone()),
                SliceCoefficients::Field(_) => {
                    Err(LabError::Unsupported("operation needs an x-independent path".into()))
                }
            })
            .collect()
    }

    /// Worst-case certificate over all slices (condition (C)'s shared class).
    pub fn certify(&self, theta: f64, kappa: f64, k: f64, n: usize) -> Result<EllipticityCertificate> {
        let mut cert = self.slices[0].certify(theta, kappa, k, n)?;
        for s in &self.slices[1..] {
            cert = cert.merge(&s.certify(theta, kappa, k, n)?);
        }
        Ok(cert)
    }

    /// Piecewise-constant version of the time mollification
    /// A_h(t) = h⁻¹∫_{t−h/2}^{t+h/2} A(r) dr (A extended constantly outside
    /// the path) holding the exact mean of A_h on each interval of `nodes`.
    pub fn mollified(&self, h: f64, nodes: &[f64]) -> Result<Self> {
        if !(h > 0.0) {
            return input("mollification width must be positive");
        }
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return input("mollification needs increasing nodes");
        }
        let syms = self.constant_symbols()?;
        let nk = self.slices.len();
        let mut out = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let mut parts = Vec::new();
            for (k, sym) in syms.iter().enumerate() {
                let lo = if k == 0 { f64::NEG_INFINITY } else { self.breakpoints[k] };
                let hi = if k + 1 == nk { f64::INFINITY } else { self.breakpoints[k + 1] };
                let wk = window_weight(lo, hi, t0, t1, h);
                if wk > 0.0 {
                    parts.push((wk, sym));
                }
            }
            let total: f64 = parts.iter().map(|p| p.0).sum();
            for p in parts.iter_mut() {
                p.0 /= total;
            }
            out.push(EllipticSymbol::weighted_sum(&parts)?);
        }
        Self::piecewise(nodes.to_vec(), out)
    }

    /// Same path with time-independent lower-order symbol `extra` added.
    pub fn plus_lower_order(&self, extra: &crate::symbol::Symbol) -> Result<Self> {
        let syms = self.constant_symbols()?;
        let shifted = syms.iter().map(|s| s.plus(extra)).collect::<Result<Vec<_>>>()?;
        Self::piecewise(self.breakpoints.clone(), shifted)
    }
}

/// (1/(hΔ)) ∫_{t0}^{t1} |[t−h/2, t+h/2] ∩ [lo, hi]| dt, evaluated exactly:
/// the overlap is piecewise linear in t.
fn window_weight(lo: f64, hi: f64, t0: f64, t1: f64, h: f64) -> f64 {
    let overlap = |t: f64| (hi.min(t + 0.5 * h) - lo.max(t - 0.5 * h)).max(0.0);
    let mut knots = vec![t0, t1];
    for k in [lo - 0.5 * h, lo + 0.5 * h, hi - 0.5 * h, hi + 0.5 * h] {
        if k.is_finite() && k > t0 && k < t1 {
            knots.push(k);
        }
    }
    knots.sort_by(f64::total_cmp);
    let integral: f64 =
        knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (overlap(w[0]) + overlap(w[1]))).sum();
    integral / (h * (t1 - t0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ModeDiagonal,
    Dense,
}

/// Σ_α a_α(x) D^α on one slice, applied through the FFT.
#[derive(Clone, Debug)]
pub struct FieldOperator {
    grid: TorusGrid,
    terms: Vec<(Vec<C>, Vec<C>)>,
    norm_bound: f64,
}

impl FieldOperator {
    pub fn new(slice: &SliceCoefficients, grid: TorusGrid) -> Result<Self> {
        let field = match slice {
            SliceCoefficients::Constant(s) => FieldSymbol::from_symbol(grid, s)?,
            SliceCoefficients::Field(f) => {
                if f.grid() != grid {
                    return input("field slice lives on a different grid");
                }
                f.clone()
            }
        };
        let mut terms = Vec::new();
        let mut norm_bound = 0.0;
        for (a, v) in field.coeffs() {
            let table: Vec<C> =
                (0..grid.len()).map(|i| C::new(a.monomial(&grid.frequency(i)), 0.0)).collect();
            let tmax = table.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            norm_bound += tmax * vmax;
            terms.push((v.clone(), table));
        }
        Ok(Self { grid, terms, norm_bound })
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// y = A x on physical values.
    pub fn apply(&self, x: &[C], y: &mut [C]) {
        let sp = self.grid.spectral();
        let mut xh = x.to_vec();
        sp.forward(&mut xh);
        self.apply_coeffs(&xh, y);
    }

    /// y = A x with x given by its coefficients.
    pub fn apply_coeffs(&self, xh: &[C], y: &mut [C]) {
        let sp = self.grid.spectral();
        y.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
        let mut buf = vec![C::new(0.0, 0.0); xh.len()];
        for (field, table) in &self.terms {
            for ((b, t), c) in buf.iter_mut().zip(table).zip(xh) {
                *b = t * c;
            }
            sp.inverse(&mut buf);
            for ((acc, f), b) in y.iter_mut().zip(field).zip(&buf) {
                *acc += f * b;
            }
        }
    }

    /// Physical-space matrix of the operator.
    pub fn matrix(&self) -> CMatrix {
        let n = self.grid.len();
        let mut m = CMatrix::zeros(n, n);
        let mut e = vec![C::new(0.0, 0.0); n];
        let mut col = vec![C::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
            e[j] = C::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

/// Factors of S(t,s) = e^{−½(t−s)A₀} T(t,s) e^{−½(t−s)A₀}, per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub left: Vec<C>,
    pub middle: Vec<C>,
    pub right: Vec<C>,
}

impl Factorization {
    pub fn compose(&self) -> Vec<C> {
        self.left.iter().zip(&self.middle).zip(&self.right).map(|((l, m), r)| l * m * r).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub backend: Backend,
    pub triples: usize,
    pub max_cocycle_defect: f64,
    pub max_identity_defect: f64,
    /// Largest ‖S(t,s)‖ over the audited pairs.
    pub max_norm: f64,
    /// ω in ‖S(t,s)‖ ≤ e^{ω(t−s)}, the smallest value consistent with the data.
    pub growth_omega: f64,
}

pub struct EvolutionFamily {
    backend: Backend,
    grid: TorusGrid,
    path: CoefficientPath,
    delta: f64,
    mode_tables: Vec<Vec<C>>,
    base_table: Vec<f64>,
    operators: Vec<FieldOperator>,
    slice_exps: Vec<OnceLock<Arc<CMatrix>>>,
    parabolic: OnceLock<std::result::Result<EllipticityCertificate, String>>,
}

impl EvolutionFamily {
    pub fn new(grid: TorusGrid, path: CoefficientPath, backend: Backend, delta: f64) -> Result<Self> {
        check_dim(grid.dim(), path.dim())?;
        if !(delta > 0.0 && delta.is_finite()) {
            return input(format!("δ must be positive, got {delta}"));
        }
        let m = path.order() as i32;
        let base_table: Vec<f64> =
            grid.frequency_norms().iter().map(|r| delta * r.powi(m)).collect();
        let mut mode_tables = Vec::new();
        let mut operators = Vec::new();
        match backend {
            Backend::ModeDiagonal => {
                for sym in path.constant_symbols()? {
                    mode_tables.push(grid.multiplier_table(|xi| sym.full(xi))?);
                }
            }
            Backend::Dense => {
                for s in path.slices() {
                    operators.push(FieldOperator::new(s, grid)?);
                }
            }
        }
        let slice_exps = (0..path.slices().len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            backend,
            grid,
            path,
            delta,
            mode_tables,
            base_table,
            operators,
            slice_exps,
            parabolic: OnceLock::new(),
        })
    }

    /// Certificate that every principal symbol stays in the open right half
    /// plane away from zero, computed once.
    pub fn parabolic(&self) -> Result<&EllipticityCertificate> {
        let res = self.parabolic.get_or_init(|| {
            let k = self.path.max_coeff() + 1.0;
            match self.path.certify(std::f64::consts::FRAC_PI_2, 1e-9, k, 64) {
                Ok(c) if c.pass => Ok(c),
                Ok(c) => Err(c.describe_failure()),
                Err(e) => Err(e.to_string()),
            }
        });
        res.as_ref().map_err(|why| LabError::NotElliptic(why.clone()))
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn path(&self) -> &CoefficientPath {
        &self.path
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// σ_k(ξ) per slice (mode backend).
    pub fn mode_table(&self, slice: usize) -> &[C] {
        &self.mode_tables[slice]
    }

    pub fn operator(&self, slice: usize) -> &FieldOperator {
        &self.operators[slice]
    }

    /// δ|ξ|^m.
    pub fn base_table(&self) -> &[f64] {
        &self.base_table
    }

    /// ∫_s^t σ(r, ξ) dr per mode.
    pub fn mode_exponent(&self, s: f64, t: f64) -> Result<Vec<C>> {
        if self.backend != Backend::ModeDiagonal {
            return Err(LabError::Unsupported("mode exponents need the mode-diagonal backend".into()));
        }
        let mut out = vec![C::new(0.0, 0.0); self.grid.len()];
        for (k, len) in self.path.overlaps(s, t) {
            for (o, v) in out.iter_mut().zip(&self.mode_tables[k]) {
                *o += v * len;
            }
        }
        Ok(out)
    }

    /// Per-mode multiplier of S(t,s); zero for t < s.
    pub fn mode_multiplier(&self, s: f64, t: f64) -> Result<Vec<C>> {
        if t < s {
            return Ok(vec![C::new(0.0, 0.0); self.grid.len()]);
        }
        Ok(self.mode_exponent(s, t)?.into_iter().map(|e| (-e).exp()).collect())
    }

    fn slice_exp(&self, k: usize) -> Result<Arc<CMatrix>> {
        if let Some(m) = self.slice_exps[k].get() {
            return Ok(m.clone());
        }
        let b = self.path.breakpoints();
        let m = Arc::new(self.partial_exp(k, b[k + 1] - b[k])?);
        Ok(self.slice_exps[k].get_or_init(|| m).clone())
    }

    fn partial_exp(&self, k: usize, len: f64) -> Result<CMatrix> {
        let a = self.operators[k].matrix();
        expm(&(a * C::new(-len, 0.0)))
    }

    /// Physical-space matrix of S(t,s) (dense backend).
    pub fn propagator_matrix(&self, s: f64, t: f64) -> Result<CMatrix> {
        if self.backend != Backend::Dense {
            return Err(LabError::Unsupported("propagator matrices need the dense backend".into()));
        }
        let cap = if self.grid.dim() == 1 { 64 } else { 16 };
        if self.grid.n() > cap {
            return Err(LabError::Unsupported(format!(
                "propagator matrices are capped at N = {cap} per axis, got {}",
                self.grid.n()
            )));
        }
        let n = self.grid.len();
        if t < s {
            return Ok(CMatrix::zeros(n, n));
        }
        let b = self.path.breakpoints();
        let mut out = CMatrix::identity(n, n);
        for (k, len) in self.path.overlaps(s, t) {
            let full = k > 0 && k + 1 < self.path.slices().len() && len == b[k + 1] - b[k];
            let full = full || (len == b[k + 1] - b[k] && s <= b[k] && t >= b[k + 1]);
            let e = if full { (*self.slice_exp(k)?).clone() } else { self.partial_exp(k, len)? };
            out = e * out;
        }
        Ok(out)
    }

    pub fn propagate(&self, s: f64, t: f64, f: &GridField) -> Result<GridField> {
        if f.grid() != self.grid {
            return input("field and family live on different grids");
        }
        if t < s {
            return Ok(GridField::zeros(self.grid));
        }
        match self.backend {
            Backend::ModeDiagonal => {
                let m = self.mode_multiplier(s, t)?;
                Ok(f.apply_table(&m))
            }
            Backend::Dense => {
                let m = self.propagator_matrix(s, t)?;
                let v = m * DVector::from_column_slice(f.values());
                GridField::new(self.grid, v.as_slice().to_vec())
            }
        }
    }

    /// The three commuting factors of S(t,s) with A₀ = δ(−Δ)^{m/2}.
    pub fn factorize(&self, s: f64, t: f64) -> Result<Factorization> {
        if self.backend != Backend::ModeDiagonal {
            return Err(LabError::Unsupported("factorization needs commuting (mode-diagonal) operators".into()));
        }
        if t < s {
            return input("factorization needs s ≤ t");
        }
        let expo = self.mode_exponent(s, t)?;
        let half: Vec<C> =
            self.base_table.iter().map(|b| C::new((-0.5 * (t - s) * b).exp(), 0.0)).collect();
        let middle =
            expo.iter().zip(&self.base_table).map(|(e, b)| (-(e - (t - s) * b)).exp()).collect();
        Ok(Factorization { left: half.clone(), middle, right: half })
    }

    /// Operator-norm defects of S(s,s) = I and S(t,r)S(r,s) = S(t,s). The
    /// dense backend measures Frobenius norms, which dominate operator norms.
    pub fn family_audit(&self, triples: &[(f64, f64, f64)]) -> Result<AuditReport> {
        let mut rep = AuditReport {
            backend: self.backend,
            triples: triples.len(),
            max_cocycle_defect: 0.0,
            max_identity_defect: 0.0,
            max_norm: 0.0,
            growth_omega: f64::NEG_INFINITY,
        };
        for &(s, r, t) in triples {
            if !(s <= r && r <= t) {
                return input(format!("triple ({s}, {r}, {t}) is not ordered"));
            }
            match self.backend {
                Backend::ModeDiagonal => {
                    let a = self.mode_multiplier(r, t)?;
                    let b = self.mode_multiplier(s, r)?;
                    let c = self.mode_multiplier(s, t)?;
                    let id = self.mode_multiplier(s, s)?;
                    let cd = a.iter().zip(&b).zip(&c).map(|((x, y), z)| (x * y - z).norm()).fold(0.0, f64::max);
                    let idd = id.iter().map(|x| (x - 1.0).norm()).fold(0.0, f64::max);
                    let nrm = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
                    rep.max_cocycle_defect = rep.max_cocycle_defect.max(cd);
                    rep.max_identity_defect = rep.max_identity_defect.max(idd);
                    self.record_growth(&mut rep, nrm, t - s);
                }
                Backend::Dense => {
                    let a = self.propagator_matrix(r, t)?;
                    let b = self.propagator_matrix(s, r)?;
                    let c = self.propagator_matrix(s, t)?;
                    let id = self.propagator_matrix(s, s)?;
                    let n = self.grid.len();
                    let cd = (&a * &b - &c).norm();
                    let idd = (id - CMatrix::identity(n, n)).norm();
                    let nrm = c.clone().svd(false, false).singular_values.max();
                    rep.max_cocycle_defect = rep.max_cocycle_defect.max(cd);
                    rep.max_identity_defect = rep.max_identity_defect.max(idd);
                    self.record_growth(&mut rep, nrm, t - s);
                }
            }
        }
        if !rep.growth_omega.is_finite() {
            rep.growth_omega = 0.0;
        }
        Ok(rep)
    }

    fn record_growth(&self, rep: &mut AuditReport, nrm: f64, gap: f64) {
        rep.max_norm = rep.max_norm.max(nrm);
        if gap > 0.0 && nrm > 0.0 {
            rep.growth_omega = rep.growth_omega.max(nrm.ln() / gap);
        }
    }
}

/// Random ordered triples in [a, b]. With `aligned`, the middle point is a
/// path breakpoint.
pub fn random_triples(path: &CoefficientPath, n: usize, aligned: bool, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut r = rng::stream(seed, rng::tag::TRIPLE, 0);
    let (a, b) = (path.start(), path.end());
    let bps = path.breakpoints();
    (0..n)
        .map(|_| {
            let mid = if aligned {
                bps[r.random_range(0..bps.len())]
            } else {
                a + (b - a) * r.random::<f64>()
            };
            let s = a + (mid - a) * r.random::<f64>();
            let t = mid + (b - mid) * r.random::<f64>();
            (s, mid, t)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SliceWire {
    Constant(EllipticSymbol),
    Field(FieldWire),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldWire {
    d: usize,
    n: usize,
    m: u32,
    fields: Vec<FieldCoeffWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldCoeffWire {
    alpha: Vec<u32>,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathWire {
    breakpoints: Vec<f64>,
    slices: Vec<SliceWire>,
}

impl Serialize for CoefficientPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let slices = self
            .slices
            .iter()
            .map(|sl| match sl {
                SliceCoefficients::Constant(sym) => SliceWire::Constant(sym.clone()),
                SliceCoefficients::Field(f) => SliceWire::Field(FieldWire {
                    d: f.grid().dim(),
                    n: f.grid().n(),
                    m: f.order(),
                    fields: f
                        .coeffs()
                        .iter()
                        .map(|(a, v)| FieldCoeffWire {
                            alpha: a.entries().to_vec(),
                            re: v.iter().map(|z| z.re).collect(),
                            im: v.iter().map(|z| z.im).collect(),
                        })
                        .collect(),
                }),
            })
            .collect();
        PathWire { breakpoints: self.breakpoints.clone(), slices }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let w = PathWire::deserialize(d)?;
        let mut slices = Vec::with_capacity(w.slices.len());
        for s in w.slices {
            slices.push(match s {
                SliceWire::Constant(sym) => SliceCoefficients::Constant(sym),
                SliceWire::Field(f) => {
                    let grid = TorusGrid::new(f.d, f.n).map_err(D::Error::custom)?;
                    let coeffs = f
                        .fields
                        .into_iter()
                        .map(|c| {
                            if c.re.len() != c.im.len() {
                                return Err(D::Error::custom("re/im length mismatch"));
                            }
                            let v = c.re.iter().zip(&c.im).map(|(a, b)| C::new(*a, *b)).collect();
                            Ok((MultiIndex::new(c.alpha), v))
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    SliceCoefficients::Field(FieldSymbol::new(grid, f.m, coeffs).map_err(D::Error::custom)?)
                }
            });
        }
        CoefficientPath::new(w.breakpoints, slices).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn heat(a: f64) -> EllipticSymbol {
        EllipticSymbol::laplacian_power(1, 2, C::new(a, 0.0)).unwrap()
    }

    #[test]
    fn averaged_symbol_examples() {
        let p = CoefficientPath::piecewise(vec![0.0, 1.0, 2.0], vec![heat(1.0), heat(3.0)]).unwrap();
        let avg = p.averaged_symbol(0.0, 2.0).unwrap();
        assert_relative_eq!(avg.principal(&[1.0]).unwrap().re, 2.0, max_relative = 1e-15);
        let one = p.averaged_symbol(1.2, 1.7).unwrap();
        assert_relative_eq!(one.principal(&[1.0]).unwrap().re, 3.0, max_relative = 1e-15);
        assert!(p.averaged_symbol(1.0, 1.0).is_err());
    }

    #[test]
    fn propagate_examples() {
        let g = TorusGrid::new(1, 16).unwrap();
        let p = CoefficientPath::piecewise(vec![0.0, 1.0, 2.0], vec![heat(1.0), heat(3.0)]).unwrap();
        let fam = EvolutionFamily::new(g, p.clone(), Backend::ModeDiagonal, 0.25).unwrap();
        let m = fam.mode_multiplier(0.0, 2.0).unwrap();
        let idx = g.index_of(&[1]).unwrap();
        assert_relative_eq!(m[idx].re, (-4.0f64).exp(), max_relative = 1e-15);
        let f = GridField::mode(g, &[1], C::new(1.0, 0.0)).unwrap();
        let same = fam.propagate(0.7, 0.7, &f).unwrap();
        assert!(same.sub(&f).unwrap().max_abs() < 1e-15);
        let back = fam.propagate(1.0, 0.5, &f).unwrap();
        assert_eq!(back.max_abs(), 0.0);

        let dense = EvolutionFamily::new(g, p, Backend::Dense, 0.25).unwrap();
        let a = fam.propagate(0.3, 1.6, &f).unwrap();
        let b = dense.propagate(0.3, 1.6, &f).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn factorization_reassembles() {
        let g = TorusGrid::new(1, 32).unwrap();
        let p = CoefficientPath::constant(heat(1.0), 0.0, 1.0).unwrap();
        let fam = EvolutionFamily::new(g, p, Backend::ModeDiagonal, 0.5).unwrap();
        let f = fam.factorize(0.1, 0.8).unwrap();
        let direct = fam.mode_multiplier(0.1, 0.8).unwrap();
        for (a, b) in f.compose().iter().zip(&direct) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
        }
        assert!(EvolutionFamily::new(g, CoefficientPath::constant(heat(1.0), 0.0, 1.0).unwrap(), Backend::ModeDiagonal, 0.0).is_err());
    }

    #[test]
    fn mollification_weights_partition_unity() {
        let p = CoefficientPath::piecewise(vec![0.0, 0.5, 1.0], vec![heat(1.0), heat(3.0)]).unwrap();
        let nodes: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let m = p.mollified(0.1, &nodes).unwrap();
        let vals: Vec<f64> =
            m.constant_symbols().unwrap().iter().map(|s| s.principal(&[1.0]).unwrap().re).collect();
        // Far from the jump the mean is untouched; straddling cells mix.
        assert_relative_eq!(vals[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(vals[19], 3.0, max_relative = 1e-14);
        // Slice [0.45, 0.5]: window mean of the ramp from 1 to 3.
        // A_h(t) = 2 + 2(t − 0.5)/0.1 on [0.45, 0.55]; mean over [0.45, 0.5] is 1.5.
        assert_relative_eq!(vals[9], 1.5, max_relative = 1e-13);
        assert_relative_eq!(vals[10], 2.5, max_relative = 1e-13);
    }

    #[test]
    fn path_json_round_trip() {
        let spec = RoughPathSpec {
            dim: 1,
            order: 2,
            start: 0.0,
            end: 1.0,
            slices: 5,
            modulus_min: 0.5,
            modulus_max: 2.0,
            max_angle: 0.9,
            lower_order: 0.1,
        };
        let p = CoefficientPath::rough(&spec, 11, 0).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: CoefficientPath = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}

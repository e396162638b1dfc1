//! Multi-indices, constant-coefficient symbols and ellipticity checks.

use crate::error::{check_dim, input, LabError, Result};
use crate::rng;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `k e_axis`.
    pub fn axis(dim: usize, axis: usize, k: u32) -> Self {
        let mut e = vec![0; dim];
        e[axis] = k;
        Self(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// ξ^α as a product of integer powers.
    pub fn monomial(&self, xi: &[f64]) -> f64 {
        self.0.iter().zip(xi).map(|(&a, &x)| x.powi(a as i32)).product()
    }

    /// All multi-indices of dimension `dim` with `|α| = k`.
    pub fn of_order(dim: usize, k: u32) -> Vec<MultiIndex> {
        fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if cur.len() + 1 == dim {
                cur.push(left);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for a in (0..=left).rev() {
                cur.push(a);
                rec(dim, left - a, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if dim == 0 {
            return out;
        }
        rec(dim, k, &mut Vec::with_capacity(dim), &mut out);
        out
    }

    /// All multi-indices with `|α| ≤ m`, sorted by order.
    pub fn up_to_order(dim: usize, m: u32) -> Vec<MultiIndex> {
        (0..=m).flat_map(|k| Self::of_order(dim, k)).collect()
    }
}

/// A constant-coefficient differential symbol without ellipticity demands.
/// Used for lower-order perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl Symbol {
    pub fn new(dim: usize, coeffs: BTreeMap<MultiIndex, Complex64>) -> Result<Self> {
        if dim == 0 {
            return input("symbol dimension must be positive");
        }
        for (alpha, c) in &coeffs {
            check_dim(dim, alpha.dim())?;
            if !(c.re.is_finite() && c.im.is_finite()) {
                return input(format!("non-finite coefficient for {:?}", alpha.entries()));
            }
        }
        Ok(Self { dim, coeffs })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, Complex64> {
        &self.coeffs
    }

    pub fn order(&self) -> u32 {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != Complex64::new(0.0, 0.0))
            .map(|(a, _)| a.order())
            .max()
            .unwrap_or(0)
    }

    /// Σ a_α ξ^α over every stored coefficient.
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        self.coeffs.iter().map(|(a, c)| c * a.monomial(xi)).sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticSymbol {
    dim: usize,
    order: u32,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

impl EllipticSymbol {
    pub fn new(dim: usize, order: u32, coeffs: BTreeMap<MultiIndex, Complex64>) -> Result<Self> {
        if dim == 0 {
            return input("symbol dimension must be positive");
        }
        if order == 0 || order % 2 == 1 {
            return input(format!("order must be a positive even integer, got {order}"));
        }
        let mut has_top = false;
        for (alpha, c) in &coeffs {
            check_dim(dim, alpha.dim())?;
            if alpha.order() > order {
                return input(format!(
                    "coefficient {:?} exceeds order {order}",
                    alpha.entries()
                ));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return input(format!("non-finite coefficient for {:?}", alpha.entries()));
            }
            if alpha.order() == order && c.norm() > 0.0 {
                has_top = true;
            }
        }
        if !has_top {
            return input("symbol has no non-zero top-order coefficient");
        }
        Ok(Self { dim, order, coeffs })
    }

    /// c·|ξ|^m with the multinomial expansion of (Σ ξ_i²)^{m/2}.
    pub fn laplacian_power(dim: usize, order: u32, c: Complex64) -> Result<Self> {
        if order == 0 || order % 2 == 1 {
            return input(format!("order must be a positive even integer, got {order}"));
        }
        let half = order / 2;
        let mut coeffs = BTreeMap::new();
        for k in MultiIndex::of_order(dim, half) {
            let mut mult = factorial(half);
            for &ki in k.entries() {
                mult /= factorial(ki);
            }
            let alpha = MultiIndex::new(k.entries().iter().map(|&x| 2 * x).collect());
            coeffs.insert(alpha, c * mult);
        }
        Self::new(dim, order, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, Complex64> {
        &self.coeffs
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Complex64 {
        self.coeffs.get(alpha).copied().unwrap_or_default()
    }

    /// A♯(ξ) = Σ_{|α|=m} a_α ξ^α.
    pub fn principal(&self, xi: &[f64]) -> Result<Complex64> {
        check_dim(self.dim, xi.len())?;
        Ok(self.principal_unchecked(xi))
    }

    pub(crate) fn principal_unchecked(&self, xi: &[f64]) -> Complex64 {
        self.coeffs
            .iter()
            .filter(|(a, _)| a.order() == self.order)
            .map(|(a, c)| c * a.monomial(xi))
            .sum()
    }

    /// Full symbol Σ_{|α|≤m} a_α ξ^α.
    pub fn full(&self, xi: &[f64]) -> Complex64 {
        self.coeffs.iter().map(|(a, c)| c * a.monomial(xi)).sum()
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> Result<Self> {
        let coeffs = self.coeffs.iter().map(|(a, v)| (a.clone(), v * c)).collect();
        Self::new(self.dim, self.order, coeffs)
    }

    /// Σ w_i sym_i, all of the same dimension and order.
    pub fn weighted_sum(parts: &[(f64, &EllipticSymbol)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return input("empty symbol combination");
        };
        let mut coeffs: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (w, s) in parts {
            check_dim(first.dim, s.dim)?;
            if s.order != first.order {
                return input("symbols of different order cannot be combined");
            }
            for (a, c) in &s.coeffs {
                *coeffs.entry(a.clone()).or_default() += c * *w;
            }
        }
        Self::new(first.dim, first.order, coeffs)
    }

    /// Add a lower-order symbol.
    pub fn plus(&self, other: &Symbol) -> Result<Self> {
        check_dim(self.dim, other.dim())?;
        let mut coeffs = self.coeffs.clone();
        for (a, c) in other.coeffs() {
            *coeffs.entry(a.clone()).or_default() += c;
        }
        Self::new(self.dim, self.order, coeffs)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

#[derive(Serialize, Deserialize)]
struct CoeffWire {
    alpha: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolWire {
    d: usize,
    m: u32,
    coeffs: Vec<CoeffWire>,
}

impl Serialize for EllipticSymbol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SymbolWire {
            d: self.dim,
            m: self.order,
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, c)| CoeffWire { alpha: a.entries().to_vec(), re: c.re, im: c.im })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EllipticSymbol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = SymbolWire::deserialize(d)?;
        let mut coeffs = BTreeMap::new();
        for c in w.coeffs {
            let key = MultiIndex::new(c.alpha);
            if coeffs.insert(key.clone(), Complex64::new(c.re, c.im)).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate coefficient {:?}",
                    key.entries()
                )));
            }
        }
        EllipticSymbol::new(w.d, w.m, coeffs).map_err(serde::de::Error::custom)
    }
}

/// Deterministic quasi-uniform points on the unit sphere of ℝ^d.
///
/// d=1 gives ±1, d=2 equispaced angles, d=3 a Fibonacci lattice. Higher
/// dimensions fall back to normalized Gaussian draws from a fixed stream.
pub fn sphere_samples(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let n = n.max(1);
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = rng::stream(n as u64, rng::tag::SPHERE, dim as u64);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    out.push(v.into_iter().map(|x| x / norm).collect());
                }
            }
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityCertificate {
    pub theta: f64,
    pub kappa: f64,
    pub coeff_bound: f64,
    pub samples: usize,
    pub pass: bool,
    /// Largest |arg A♯(ξ)| seen on the sphere.
    pub worst_arg: f64,
    /// Smallest |A♯(ξ)| seen on the sphere.
    pub min_modulus: f64,
    pub max_coeff: f64,
    /// θ − worst_arg; positive when the angle condition holds.
    pub arg_margin: f64,
    /// min_modulus − κ.
    pub modulus_margin: f64,
}

impl EllipticityCertificate {
    /// Combine certificates of several symbols checked against the same class.
    pub fn merge(&self, other: &Self) -> Self {
        let worst_arg = self.worst_arg.max(other.worst_arg);
        let min_modulus = self.min_modulus.min(other.min_modulus);
        let max_coeff = self.max_coeff.max(other.max_coeff);
        Self {
            theta: self.theta,
            kappa: self.kappa,
            coeff_bound: self.coeff_bound,
            samples: self.samples,
            pass: self.pass && other.pass,
            worst_arg,
            min_modulus,
            max_coeff,
            arg_margin: self.theta - worst_arg,
            modulus_margin: min_modulus - self.kappa,
        }
    }

    pub fn describe_failure(&self) -> String {
        let mut why = Vec::new();
        if self.arg_margin <= 0.0 {
            why.push(format!("max |arg| {:.6} ≥ θ {:.6}", self.worst_arg, self.theta));
        }
        if self.modulus_margin < 0.0 {
            why.push(format!("min modulus {:.6} < κ {:.6}", self.min_modulus, self.kappa));
        }
        if self.max_coeff > self.coeff_bound {
            why.push(format!("max |a| {:.6} > K {:.6}", self.max_coeff, self.coeff_bound));
        }
        why.join("; ")
    }
}

pub fn check_ellipticity(
    sym: &EllipticSymbol,
    theta: f64,
    kappa: f64,
    k_bound: f64,
    n_samples: usize,
) -> Result<EllipticityCertificate> {
    if !(theta > 0.0 && theta < PI) {
        return input(format!("θ must lie in (0, π), got {theta}"));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return input(format!("κ must lie in (0, 1), got {kappa}"));
    }
    if !(k_bound.is_finite() && k_bound > 0.0) {
        return input(format!("K must be positive, got {k_bound}"));
    }
    if n_samples == 0 {
        return input("need at least one sphere sample");
    }
    let samples = sphere_samples(sym.dim(), n_samples);
    let mut worst_arg: f64 = 0.0;
    let mut min_modulus = f64::INFINITY;
    for xi in &samples {
        let v = sym.principal_unchecked(xi);
        worst_arg = worst_arg.max(v.arg().abs());
        min_modulus = min_modulus.min(v.norm());
    }
    let max_coeff = sym.max_coeff();
    let pass = worst_arg < theta && min_modulus >= kappa && max_coeff <= k_bound;
    Ok(EllipticityCertificate {
        theta,
        kappa,
        coeff_bound: k_bound,
        samples: samples.len(),
        pass,
        worst_arg,
        min_modulus,
        max_coeff,
        arg_margin: theta - worst_arg,
        modulus_margin: min_modulus - kappa,
    })
}

/// Radii and directions of the ξ grid used by [`mihlin_audit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub n_directions: usize,
}

impl Default for XiGrid {
    fn default() -> Self {
        Self { r_min: 1e-2, r_max: 1e2, n_radii: 161, n_directions: 64 }
    }
}

/// Sup over the grid and over α (αᵢ ≤ 1, |α| ≤ `max_deriv_order`) of
/// |ξ^α D^α ℳ(ξ)| with ℳ(ξ) = λ^{1−|β|/m} ξ^β (λ + A♯(ξ))^{-1}.
pub fn mihlin_audit(
    sym: &EllipticSymbol,
    lambda: Complex64,
    beta: &MultiIndex,
    max_deriv_order: u32,
    grid: &XiGrid,
) -> Result<f64> {
    let d = sym.dim();
    check_dim(d, beta.dim())?;
    if beta.order() > sym.order() {
        return input("|β| must not exceed the symbol order");
    }
    if !(grid.r_min > 0.0 && grid.r_max >= grid.r_min && grid.n_radii >= 1) {
        return input("bad ξ grid");
    }
    let power = 1.0 - beta.order() as f64 / sym.order() as f64;
    let pref = if power == 0.0 { Complex64::new(1.0, 0.0) } else { lambda.powf(power) };
    let m_of = |xi: &[f64]| -> Result<Complex64> {
        let den = lambda + sym.principal_unchecked(xi);
        if den.norm() < 1e-300 || !den.re.is_finite() || !den.im.is_finite() {
            return Err(LabError::Numeric(format!("singular resolvent symbol at ξ = {xi:?}")));
        }
        Ok(pref * beta.monomial(xi) / den)
    };

    // α with entries in {0,1}.
    let alphas: Vec<Vec<usize>> = (0u32..(1 << d))
        .map(|mask| (0..d).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s| s.len() as u32 <= max_deriv_order)
        .collect();

    let mut best = 0.0f64;
    // The origin only contributes to the α = 0 term.
    best = best.max(m_of(&vec![0.0; d])?.norm());
    let dirs = sphere_samples(d, grid.n_directions);
    let nr = grid.n_radii;
    for k in 0..nr {
        let r = if nr == 1 {
            grid.r_min
        } else {
            grid.r_min * (grid.r_max / grid.r_min).powf(k as f64 / (nr - 1) as f64)
        };
        for dir in &dirs {
            let xi: Vec<f64> = dir.iter().map(|x| x * r).collect();
            let h = 1e-4 * r;
            for support in &alphas {
                // Tensor central difference over the coordinates in `support`.
                let mut acc = Complex64::new(0.0, 0.0);
                for signs in 0u32..(1 << support.len()) {
                    let mut pt = xi.clone();
                    let mut sgn = 1.0;
                    for (j, &axis) in support.iter().enumerate() {
                        if signs & (1 << j) != 0 {
                            pt[axis] += h;
                        } else {
                            pt[axis] -= h;
                            sgn = -sgn;
                        }
                    }
                    acc += m_of(&pt)? * sgn;
                }
                let deriv = acc / (2.0 * h).powi(support.len() as i32);
                let weight: f64 = support.iter().map(|&axis| xi[axis]).product();
                best = best.max((deriv * weight).norm());
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::of_order(2, 2).len(), 3);
        assert_eq!(MultiIndex::of_order(3, 2).len(), 6);
        assert_eq!(MultiIndex::up_to_order(2, 2).len(), 6);
        assert!(MultiIndex::of_order(2, 4).iter().all(|a| a.order() == 4));
    }

    #[test]
    fn principal_examples() {
        let lap = EllipticSymbol::laplacian_power(2, 2, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(lap.principal(&[1.0, 0.0]).unwrap().re, 1.0);
        let bi = EllipticSymbol::laplacian_power(2, 4, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(bi.principal(&[0.0, 1.0]).unwrap().re, 1.0);
        assert_relative_eq!(bi.principal(&[0.6, 0.8]).unwrap().re, 1.0, max_relative = 1e-14);

        let mut coeffs = BTreeMap::new();
        coeffs.insert(MultiIndex::new(vec![2, 0]), c(2.0, 0.0));
        coeffs.insert(MultiIndex::new(vec![0, 2]), c(1.0, 0.0));
        coeffs.insert(MultiIndex::new(vec![1, 1]), c(0.5, 0.0));
        let s = EllipticSymbol::new(2, 2, coeffs).unwrap();
        // Term by term: 2·1·1 + 1·1·1 + 0.5·1·1.
        let oracle = 2.0 * 1f64.powi(2) + 1.0 * 1f64.powi(2) + 0.5 * 1.0 * 1.0;
        assert_eq!(oracle, 3.5);
        assert_relative_eq!(s.principal(&[1.0, 1.0]).unwrap().re, oracle);
        assert!(s.principal(&[1.0]).is_err());
    }

    #[test]
    fn construction_rejects_bad_symbols() {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(MultiIndex::new(vec![1]), c(1.0, 0.0));
        assert!(EllipticSymbol::new(1, 2, coeffs.clone()).is_err());
        coeffs.insert(MultiIndex::new(vec![3]), c(1.0, 0.0));
        assert!(EllipticSymbol::new(1, 2, coeffs).is_err());
        assert!(EllipticSymbol::laplacian_power(1, 3, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn ellipticity_examples() {
        let lap = EllipticSymbol::laplacian_power(2, 2, c(1.0, 0.0)).unwrap();
        assert!(check_ellipticity(&lap, PI / 4.0, 0.5, 1.0, 1000).unwrap().pass);
        let imag = EllipticSymbol::laplacian_power(2, 2, c(0.0, 1.0)).unwrap();
        assert!(!check_ellipticity(&imag, PI / 2.0 - 1e-3, 0.5, 1.0, 1000).unwrap().pass);
        let rot = EllipticSymbol::laplacian_power(2, 2, Complex64::from_polar(1.0, PI / 4.0)).unwrap();
        assert!(check_ellipticity(&rot, PI / 4.0 + 0.01, 0.5, 1.0, 1000).unwrap().pass);
        let cert = check_ellipticity(&rot, PI / 4.0 - 0.01, 0.5, 1.0, 1000).unwrap();
        assert!(!cert.pass);
        assert_relative_eq!(cert.worst_arg, PI / 4.0, max_relative = 1e-12);
        assert!(check_ellipticity(&lap, 0.0, 0.5, 1.0, 10).is_err());
    }

    #[test]
    fn mihlin_examples() {
        let lap = EllipticSymbol::laplacian_power(2, 2, c(1.0, 0.0)).unwrap();
        let g = XiGrid::default();
        let v = mihlin_audit(&lap, c(1.0, 0.0), &MultiIndex::zero(2), 0, &g).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        let beta = MultiIndex::new(vec![2, 0]);
        let v = mihlin_audit(&lap, c(1.0, 0.0), &beta, 0, &g).unwrap();
        assert!(v <= 1.0 && v > 0.99);
        let a = mihlin_audit(&lap, c(1.0, 0.0), &MultiIndex::zero(2), 2, &g).unwrap();
        let b = mihlin_audit(&lap, c(100.0, 0.0), &MultiIndex::zero(2), 2, &g).unwrap();
        assert!((a / b - 1.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn json_round_trip() {
        let s = EllipticSymbol::laplacian_power(2, 4, c(0.5, 0.25)).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"coeffs\""));
        let back: EllipticSymbol = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"d":1,"m":2,"coeffs":[{"alpha":[1],"re":1,"im":0}]}"#;
        assert!(serde_json::from_str::<EllipticSymbol>(bad).is_err());
    }
}

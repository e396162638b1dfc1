//! Fields on the periodic torus [0, 2π)^d, their Fourier coefficients and
//! the norm functionals used throughout the crate.
//!
//! Coefficients follow `f(x) = Σ_ξ f̂(ξ) e^{iξ·x}`, so the forward transform
//! carries the 1/N^d factor and a single mode e^{ikx} has coefficient 1.

use crate::error::{input, LabError, Result};
use crate::symbol::MultiIndex;
use crate::weights::{csv_err, SampledWeight};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return input(format!("torus dimension must be 1 or 2, got {dim}"));
        }
        if n < 2 || !n.is_power_of_two() {
            return input(format!("points per axis must be a power of two ≥ 2, got {n}"));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    fn split(&self, idx: usize) -> (usize, usize) {
        if self.dim == 1 {
            (idx, 0)
        } else {
            (idx / self.n, idx % self.n)
        }
    }

    /// Grid point x_j = 2πj/N per axis.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        let (i, j) = self.split(idx);
        if self.dim == 1 {
            vec![i as f64 * h]
        } else {
            vec![i as f64 * h, j as f64 * h]
        }
    }

    fn wrap(&self, k: usize) -> i64 {
        if k <= self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Integer frequency at coefficient index `idx`, in {−N/2+1, …, N/2}^d.
    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        let (i, j) = self.split(idx);
        if self.dim == 1 {
            vec![self.wrap(i) as f64]
        } else {
            vec![self.wrap(i) as f64, self.wrap(j) as f64]
        }
    }

    /// Coefficient index of an integer frequency (wrapped into range).
    pub fn index_of(&self, k: &[i64]) -> Result<usize> {
        if k.len() != self.dim {
            return Err(LabError::Dimension { expected: self.dim, got: k.len() });
        }
        let n = self.n as i64;
        let w = |x: i64| x.rem_euclid(n) as usize;
        Ok(if self.dim == 1 { w(k[0]) } else { w(k[0]) * self.n + w(k[1]) })
    }

    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }

    /// |ξ| for every coefficient index.
    pub fn frequency_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.frequency(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Values m(ξ) on the frequency set, rejecting non-finite entries.
    pub fn multiplier_table(&self, m: impl Fn(&[f64]) -> C) -> Result<Vec<C>> {
        (0..self.len())
            .map(|i| {
                let xi = self.frequency(i);
                let v = m(&xi);
                if v.re.is_finite() && v.im.is_finite() {
                    Ok(v)
                } else {
                    Err(LabError::Numeric(format!("multiplier is not finite at ξ = {xi:?}")))
                }
            })
            .collect()
    }

    pub fn spectral(&self) -> Arc<Spectral> {
        static CACHE: OnceLock<Mutex<HashMap<TorusGrid, Arc<Spectral>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(*self).or_insert_with(|| Arc::new(Spectral::new(*self))).clone()
    }
}

/// Planned transforms for one grid.
pub struct Spectral {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self { grid, fwd: planner.plan_fft_forward(grid.n), inv: planner.plan_fft_inverse(grid.n) }
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [C]) {
        let n = self.grid.n;
        // Rows are contiguous; rustfft treats the buffer as a batch.
        plan.process(data);
        if self.grid.dim == 2 {
            let mut col = vec![C::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                plan.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
    }

    /// Physical values to coefficients, in place.
    pub fn forward(&self, data: &mut [C]) {
        debug_assert_eq!(data.len(), self.grid.len());
        self.run(&self.fwd, data);
        let s = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Coefficients to physical values, in place.
    pub fn inverse(&self, data: &mut [C]) {
        debug_assert_eq!(data.len(), self.grid.len());
        self.run(&self.inv, data);
    }
}

/// |z|^q with fast paths for the exponents used most.
#[inline]
pub fn abs_pow(z: C, q: f64) -> f64 {
    let n2 = z.norm_sqr();
    if q == 2.0 {
        n2
    } else if q == 1.0 {
        n2.sqrt()
    } else if q == 3.0 {
        n2 * n2.sqrt()
    } else if q == 1.5 {
        let a = n2.sqrt();
        a * a.sqrt()
    } else if q == 4.0 {
        n2 * n2
    } else {
        n2.powf(0.5 * q)
    }
}

/// Weighted L^q quadrature on one grid: precomputed w(x)·Δx.
#[derive(Clone, Debug, PartialEq)]
pub struct LqNorm {
    q: f64,
    weights: Vec<f64>,
}

impl LqNorm {
    pub fn new(grid: TorusGrid, q: f64, w: Option<&SampledWeight>) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return input(format!("q must lie in [1, ∞), got {q}"));
        }
        let dx = grid.cell_volume();
        let weights = match w {
            None => vec![dx; grid.len()],
            Some(w) => {
                check_weight_grid(grid, w)?;
                w.values().iter().map(|v| v * dx).collect()
            }
        };
        Ok(Self { q, weights })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Σ |f|^q w Δx.
    pub fn pow_sum(&self, phys: &[C]) -> f64 {
        phys.iter().zip(&self.weights).map(|(z, w)| abs_pow(*z, self.q) * w).sum()
    }

    pub fn norm(&self, phys: &[C]) -> f64 {
        let s = self.pow_sum(phys);
        if self.q == 2.0 {
            s.sqrt()
        } else {
            s.powf(1.0 / self.q)
        }
    }
}

fn check_weight_grid(grid: TorusGrid, w: &SampledWeight) -> Result<()> {
    let g = w.grid();
    let ok = g.dim() == grid.dim()
        && g.cells.iter().all(|&c| c == grid.n())
        && g.lower.iter().all(|&a| a == 0.0)
        && g.upper.iter().all(|&b| (b - 2.0 * PI).abs() < 1e-12);
    if ok {
        Ok(())
    } else {
        input("weight grid does not match the torus grid")
    }
}

/// Sobolev norm machinery: multiplier tables ξ^α for |α| ≤ m.
#[derive(Clone, Debug)]
pub struct SobolevNorm {
    grid: TorusGrid,
    m: u32,
    tables: Vec<(u32, Vec<C>)>,
    lq: LqNorm,
}

impl SobolevNorm {
    pub fn new(grid: TorusGrid, m: u32, lq: LqNorm) -> Self {
        let tables = MultiIndex::up_to_order(grid.dim(), m)
            .into_iter()
            .map(|a| {
                let t = (0..grid.len())
                    .map(|i| C::new(a.monomial(&grid.frequency(i)), 0.0))
                    .collect();
                (a.order(), t)
            })
            .collect();
        Self { grid, m, tables, lq }
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    pub fn lq(&self) -> &LqNorm {
        &self.lq
    }

    /// (Σ_{|α|≤m} ‖D^α f‖, Σ_{|α|=m} ‖D^α f‖) from coefficients.
    pub fn norms_from_coeffs(&self, coeffs: &[C]) -> (f64, f64) {
        let sp = self.grid.spectral();
        let mut buf = vec![C::new(0.0, 0.0); coeffs.len()];
        let (mut full, mut semi) = (0.0, 0.0);
        for (order, t) in &self.tables {
            if t.iter().zip(coeffs).all(|(a, c)| a.re == 0.0 || *c == C::new(0.0, 0.0)) {
                continue;
            }
            for ((b, a), c) in buf.iter_mut().zip(t).zip(coeffs) {
                *b = a * c;
            }
            sp.inverse(&mut buf);
            let v = self.lq.norm(&buf);
            full += v;
            if *order == self.m {
                semi += v;
            }
        }
        (full, semi)
    }

    /// (order, D^α f) in physical space for every |α| ≤ m.
    pub fn derivatives(&self, coeffs: &[C]) -> Vec<(u32, Vec<C>)> {
        let sp = self.grid.spectral();
        self.tables
            .iter()
            .map(|(order, t)| {
                let mut buf: Vec<C> = t.iter().zip(coeffs).map(|(a, c)| a * c).collect();
                sp.inverse(&mut buf);
                (*order, buf)
            })
            .collect()
    }

    /// Per order k: Σ_{|α|=k} ‖D^α f‖.
    pub fn by_order(&self, coeffs: &[C]) -> Vec<f64> {
        let sp = self.grid.spectral();
        let mut out = vec![0.0; self.m as usize + 1];
        let mut buf = vec![C::new(0.0, 0.0); coeffs.len()];
        for (order, t) in &self.tables {
            for ((b, a), c) in buf.iter_mut().zip(t).zip(coeffs) {
                *b = a * c;
            }
            sp.inverse(&mut buf);
            out[*order as usize] += self.lq.norm(&buf);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    values: Vec<C>,
}

impl GridField {
    pub fn new(grid: TorusGrid, values: Vec<C>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Dimension { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, values: vec![C::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> C) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
    }

    /// amp · e^{ik·x}.
    pub fn mode(grid: TorusGrid, k: &[i64], amp: C) -> Result<Self> {
        let idx = grid.index_of(k)?;
        let mut coeffs = vec![C::new(0.0, 0.0); grid.len()];
        coeffs[idx] = amp;
        Ok(Self::from_coeffs(grid, coeffs))
    }

    pub fn from_coeffs(grid: TorusGrid, mut coeffs: Vec<C>) -> Self {
        grid.spectral().inverse(&mut coeffs);
        Self { grid, values: coeffs }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C> {
        self.values
    }

    pub fn coeffs(&self) -> Vec<C> {
        let mut c = self.values.clone();
        self.grid.spectral().forward(&mut c);
        c
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: C) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C, C) -> C) -> Result<Self> {
        if self.grid != other.grid {
            return input("fields live on different grids");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn apply_multiplier(&self, m: impl Fn(&[f64]) -> C) -> Result<Self> {
        let table = self.grid.multiplier_table(m)?;
        Ok(self.apply_table(&table))
    }

    pub fn apply_table(&self, table: &[C]) -> Self {
        let mut c = self.coeffs();
        c.iter_mut().zip(table).for_each(|(v, m)| *v *= m);
        Self::from_coeffs(self.grid, c)
    }

    pub fn lq_norm(&self, q: f64, w: Option<&SampledWeight>) -> Result<f64> {
        Ok(LqNorm::new(self.grid, q, w)?.norm(&self.values))
    }

    /// (Σ_{|α|≤m} ‖D^α f‖_q, Σ_{|α|=m} ‖D^α f‖_q).
    pub fn sobolev_norms(&self, m: u32, q: f64) -> Result<(f64, f64)> {
        if m == 0 {
            return input("Sobolev order must be at least 1");
        }
        let s = SobolevNorm::new(self.grid, m, LqNorm::new(self.grid, q, None)?);
        Ok(s.norms_from_coeffs(&self.coeffs()))
    }

    /// Littlewood–Paley block index per coefficient: 0 for |ξ| ≤ 1, j for
    /// 2^{j−1} < |ξ| ≤ 2^j.
    pub fn block_indices(grid: TorusGrid) -> Vec<usize> {
        grid.frequency_norms()
            .into_iter()
            .map(|r| {
                let mut j = 0usize;
                while r > (1u64 << j) as f64 {
                    j += 1;
                }
                j
            })
            .collect()
    }

    /// Sharp Littlewood–Paley pieces Δ_j f.
    pub fn littlewood_paley(&self) -> Vec<GridField> {
        let blocks = Self::block_indices(self.grid);
        let top = blocks.iter().copied().max().unwrap_or(0);
        let c = self.coeffs();
        (0..=top)
            .map(|j| {
                let part = c
                    .iter()
                    .zip(&blocks)
                    .map(|(v, &b)| if b == j { *v } else { C::new(0.0, 0.0) })
                    .collect();
                Self::from_coeffs(self.grid, part)
            })
            .collect()
    }

    /// (Σ_j 2^{jsp} ‖Δ_j f‖_q^p)^{1/p}.
    pub fn besov_norm(&self, s: f64, q: f64, p: f64) -> Result<f64> {
        if !(s > 0.0) || !(p >= 1.0) {
            return input("Besov norm needs s > 0 and p ≥ 1");
        }
        let lq = LqNorm::new(self.grid, q, None)?;
        let total: f64 = self
            .littlewood_paley()
            .iter()
            .enumerate()
            .map(|(j, piece)| (2f64.powf(j as f64 * s) * lq.norm(&piece.values)).powf(p))
            .sum();
        Ok(total.powf(1.0 / p))
    }

    /// Pairs (‖f − P_L f‖_q, ‖P_L f‖_{W^{m,q}}) for every sharp cutoff L,
    /// starting with the empty projection and ending with the full one.
    pub fn cutoff_pairs(&self, q: f64, m: u32) -> Result<Vec<(f64, f64)>> {
        let lq = LqNorm::new(self.grid, q, None)?;
        let sob = SobolevNorm::new(self.grid, m, lq.clone());
        let c = self.coeffs();
        let r2: Vec<i64> = self
            .grid
            .frequencies()
            .iter()
            .map(|xi| xi.iter().map(|x| (x * x).round() as i64).sum())
            .collect();
        let mut levels: Vec<i64> = r2.clone();
        levels.sort_unstable();
        levels.dedup();
        let mut out = vec![(lq.norm(&self.values), 0.0)];
        let sp = self.grid.spectral();
        for &lev in &levels {
            let low: Vec<C> =
                c.iter().zip(&r2).map(|(v, &r)| if r <= lev { *v } else { C::new(0.0, 0.0) }).collect();
            let mut high: Vec<C> = c.iter().zip(&low).map(|(a, b)| a - b).collect();
            sp.inverse(&mut high);
            let (w, _) = sob.norms_from_coeffs(&low);
            out.push((lq.norm(&high), w));
        }
        Ok(out)
    }

    /// K(t, f) = min_L (‖f − P_L f‖_q + t‖P_L f‖_{W^{m,q}}).
    pub fn k_functional(&self, t: f64, q: f64, m: u32) -> Result<f64> {
        let pairs = self.cutoff_pairs(q, m)?;
        Ok(pairs.iter().map(|(a, b)| a + t * b).fold(f64::INFINITY, f64::min))
    }

    /// Discrete real-interpolation norm (Σ_k [2^{−kθ} K(2^k)]^p ln 2)^{1/p}
    /// summed over all k ∈ ℤ; both tails are geometric and summed exactly.
    pub fn trace_norm_oracle(&self, theta: f64, q: f64, p: f64, m: u32) -> Result<f64> {
        if !(theta > 0.0 && theta < 1.0) {
            return input(format!("θ must lie in (0, 1), got {theta}"));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return input("p must be finite and ≥ 1");
        }
        let pairs = self.cutoff_pairs(q, m)?;
        Ok(k_functional_norm(&pairs, theta, p))
    }
}

/// Interpolation norm of the concave piecewise-linear K(t) = min (a + t b).
pub fn k_functional_norm(pairs: &[(f64, f64)], theta: f64, p: f64) -> f64 {
    let f_norm = pairs.first().map(|x| x.0).unwrap_or(0.0);
    let w_full = pairs.last().map(|x| x.1).unwrap_or(0.0);
    if f_norm == 0.0 {
        return 0.0;
    }
    let k_of = |t: f64| pairs.iter().map(|(a, b)| a + t * b).fold(f64::INFINITY, f64::min);
    // Below t_lo the full projection wins; above t_hi the empty one does.
    let mut t_lo = f64::INFINITY;
    let mut t_hi: f64 = 0.0;
    for &(a, b) in pairs {
        if b < w_full {
            t_lo = t_lo.min(a / (w_full - b));
        }
        if b > 0.0 && a < f_norm {
            t_hi = t_hi.max((f_norm - a) / b);
        }
    }
    let k_hi = if t_hi > 0.0 { t_hi.log2().ceil() as i64 } else { 0 };
    let k_lo = if t_lo.is_finite() && t_lo > 0.0 {
        (t_lo.log2().floor() as i64).min(k_hi - 1)
    } else {
        k_hi - 1
    };
    let tp = |k: i64| 2f64.powi(k as i32);
    let mut total = 0.0;
    if w_full > 0.0 {
        let r = 2f64.powf(-(1.0 - theta) * p);
        total += (tp(k_lo).powf(1.0 - theta) * w_full).powf(p) / (1.0 - r);
    }
    for k in (k_lo + 1)..k_hi {
        total += (tp(k).powf(-theta) * k_of(tp(k))).powf(p);
    }
    let r = 2f64.powf(-theta * p);
    total += (tp(k_hi).powf(-theta) * f_norm).powf(p) / (1.0 - r);
    (total * std::f64::consts::LN_2).powf(1.0 / p)
}

impl GridField {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.grid.dim()).map(|i| format!("x{i}")).collect();
        header.push("re".into());
        header.push("im".into());
        out.write_record(&header).map_err(csv_err)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.coords(i).iter().map(|x| x.to_string()).collect();
            row.push(v.re.to_string());
            row.push(v.im.to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(grid: TorusGrid, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| LabError::Input("short CSV row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Input(e.to_string()))
            };
            values.push(C::new(num(d)?, num(d + 1)?));
        }
        Self::new(grid, values)
    }

    /// Header d, N as little-endian u64, then row-major (re, im) pairs as
    /// little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let d = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let grid = TorusGrid::new(d, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            values.push(C::new(re, im));
        }
        Self::new(grid, values)
    }
}

/// Values of a field at increasing time nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    times: Vec<f64>,
    slices: Vec<GridField>,
}

impl SpaceTimeField {
    pub fn new(times: Vec<f64>, slices: Vec<GridField>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return input("time nodes and slices must be non-empty and of equal length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return input("time nodes must be strictly increasing");
        }
        let g = slices[0].grid();
        if slices.iter().any(|s| s.grid() != g) {
            return input("all slices must share one grid");
        }
        Ok(Self { times, slices })
    }

    pub fn from_fn(grid: TorusGrid, times: &[f64], f: impl Fn(f64, &[f64]) -> C) -> Result<Self> {
        let slices = times.iter().map(|&t| GridField::from_fn(grid, |x| f(t, x))).collect();
        Self::new(times.to_vec(), slices)
    }

    pub fn zeros(grid: TorusGrid, times: &[f64]) -> Result<Self> {
        Self::new(times.to_vec(), times.iter().map(|_| GridField::zeros(grid)).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[GridField] {
        &self.slices
    }

    pub fn grid(&self) -> TorusGrid {
        self.slices[0].grid()
    }

    pub fn last(&self) -> &GridField {
        self.slices.last().expect("non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn multiplier_examples() {
        let g = TorusGrid::new(1, 16).unwrap();
        let f = GridField::from_fn(g, |x| C::from_polar(1.0, x[0]));
        let same = f.apply_multiplier(|_| c(1.0, 0.0)).unwrap();
        assert!(same.sub(&f).unwrap().max_abs() < 1e-14);
        let d = f.apply_multiplier(|xi| c(0.0, xi[0])).unwrap();
        let expect = f.scale(c(0.0, 1.0));
        assert!(d.sub(&expect).unwrap().max_abs() < 1e-13);
        let f3 = GridField::mode(g, &[3], c(1.0, 0.0)).unwrap();
        let r = f3.apply_multiplier(|xi| c(1.0 / (1.0 + xi[0] * xi[0]), 0.0)).unwrap();
        let expect = f3.scale(c(0.1, 0.0));
        assert!(r.sub(&expect).unwrap().max_abs() < 1e-14);
        assert!(f.apply_multiplier(|_| c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn lq_examples() {
        let g = TorusGrid::new(1, 32).unwrap();
        let one = GridField::from_fn(g, |_| c(1.0, 0.0));
        assert_relative_eq!(one.lq_norm(3.0, None).unwrap(), (2.0 * PI).powf(1.0 / 3.0), max_relative = 1e-14);
        let e = GridField::from_fn(g, |x| C::from_polar(1.0, x[0]));
        assert_relative_eq!(e.lq_norm(2.0, None).unwrap(), (2.0 * PI).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn sobolev_single_mode() {
        let g = TorusGrid::new(1, 32).unwrap();
        let f = GridField::mode(g, &[3], c(1.0, 0.0)).unwrap();
        let (full, semi) = f.sobolev_norms(2, 2.0).unwrap();
        let unit = (2.0 * PI).sqrt();
        assert_relative_eq!(semi, 9.0 * unit, max_relative = 1e-13);
        assert_relative_eq!(full, (1.0 + 3.0 + 9.0) * unit, max_relative = 1e-13);
        let k = GridField::from_fn(g, |_| c(2.0, 0.0));
        assert!(k.sobolev_norms(2, 2.0).unwrap().1 < 1e-13);
        assert_eq!(GridField::zeros(g).sobolev_norms(2, 2.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn frequencies_cover_the_symmetric_range() {
        let g = TorusGrid::new(1, 8).unwrap();
        let mut f: Vec<i64> = g.frequencies().iter().map(|x| x[0] as i64).collect();
        f.sort();
        assert_eq!(f, vec![-3, -2, -1, 0, 1, 2, 3, 4]);
        assert!(TorusGrid::new(1, 12).is_err());
        assert!(TorusGrid::new(3, 8).is_err());
    }

    #[test]
    fn besov_single_block() {
        let g = TorusGrid::new(1, 64).unwrap();
        let f = GridField::mode(g, &[6], c(1.0, 0.0)).unwrap();
        // 6 lies in block j = 3 (4 < 6 ≤ 8).
        let b = f.besov_norm(1.5, 2.0, 2.0).unwrap();
        assert_relative_eq!(b, 2f64.powf(3.0 * 1.5) * (2.0 * PI).sqrt(), max_relative = 1e-13);
        assert_eq!(GridField::zeros(g).besov_norm(1.0, 2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_field_k_functional() {
        let g = TorusGrid::new(1, 16).unwrap();
        let f = GridField::from_fn(g, |_| c(1.5, 0.0));
        let fq = f.lq_norm(2.0, None).unwrap();
        let (w, _) = f.sobolev_norms(2, 2.0).unwrap();
        for t in [0.1, 0.5, 1.0, 3.0] {
            let k = f.k_functional(t, 2.0, 2).unwrap();
            assert_relative_eq!(k, fq.min(t * w), max_relative = 1e-13);
        }
    }

    #[test]
    fn k_norm_tails_match_brute_sum() {
        // Two-point K(t) = min(F, tW): compare with a long explicit sum.
        let pairs = [(2.0, 0.0), (0.5, 1.0), (0.0, 3.0)];
        let (theta, p) = (0.4, 2.5);
        let k_of = |t: f64| pairs.iter().map(|(a, b)| a + t * b).fold(f64::INFINITY, f64::min);
        let brute: f64 = (-200..200)
            .map(|k| (2f64.powi(k).powf(-theta) * k_of(2f64.powi(k))).powf(p))
            .sum::<f64>()
            * std::f64::consts::LN_2;
        assert_relative_eq!(k_functional_norm(&pairs, theta, p), brute.powf(1.0 / p), max_relative = 1e-12);
    }

    #[test]
    fn io_round_trips() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = GridField::from_fn(g, |x| c(x[0].sin(), x[1].cos() * 0.3));
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 + 64 * 16);
        assert_eq!(GridField::read_binary(&bin[..]).unwrap(), f);
        let mut text = Vec::new();
        f.write_csv(&mut text).unwrap();
        assert_eq!(GridField::read_csv(g, &text[..]).unwrap(), f);
    }

    #[test]
    fn space_time_validation() {
        let g = TorusGrid::new(1, 8).unwrap();
        assert!(SpaceTimeField::zeros(g, &[0.0, 1.0, 1.0]).is_err());
        assert!(SpaceTimeField::zeros(g, &[0.0, 0.5, 1.0]).is_ok());
    }
}

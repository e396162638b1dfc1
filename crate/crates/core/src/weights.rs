//! Muckenhoupt weights, the Hardy–Littlewood maximal operator, kernels
//! dominated by it, and the sector Poisson kernel.

use crate::error::{input, LabError, Result};
use crate::quadrature::{integrate, integrate_real_line, integrate_to_infinity, QuadOptions};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

/// t ↦ |t − t₀|^α.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerWeight {
    pub exponent: f64,
    #[serde(default)]
    pub origin: f64,
}

impl PowerWeight {
    pub fn new(exponent: f64, origin: f64) -> Self {
        Self { exponent, origin }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let r = (t - self.origin).abs();
        if self.exponent == 0.0 {
            1.0
        } else {
            r.powf(self.exponent)
        }
    }

    /// Power weights lie in A_p exactly for α ∈ (−1, p−1).
    pub fn is_ap(&self, p: f64) -> bool {
        self.exponent > -1.0 && self.exponent < p - 1.0
    }
}

/// Uniform cell grid on a box in ℝ^d (d = 1 or 2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl BoxGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = cells.len();
        if d == 0 || d > 2 || lower.len() != d || upper.len() != d {
            return input("box grids support d = 1 or 2 with matching bounds");
        }
        if cells.contains(&0) {
            return input("empty grid");
        }
        for i in 0..d {
            if !(lower[i].is_finite() && upper[i].is_finite() && upper[i] > lower[i]) {
                return input(format!("bad bounds on axis {i}"));
            }
        }
        Ok(Self { lower, upper, cells })
    }

    pub fn line(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new(vec![a], vec![b], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    /// Midpoint of the cell with flat index `idx` (row-major, last axis fastest).
    pub fn midpoint(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut rest = idx;
        for axis in (0..self.dim()).rev() {
            let k = rest % self.cells[axis];
            rest /= self.cells[axis];
            out[axis] = self.lower[axis] + (k as f64 + 0.5) * self.spacing(axis);
        }
        out
    }
}

/// Positive finite samples of a weight, one per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWeight {
    grid: BoxGrid,
    values: Vec<f64>,
}

impl SampledWeight {
    pub fn new(grid: BoxGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Dimension { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return input(format!("weight sample {i} is not positive and finite: {}", values[i]));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: BoxGrid, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n])
    }

    /// Sample `f` at cell midpoints.
    pub fn from_midpoints(grid: BoxGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.midpoint(i))).collect();
        Self::new(grid, values)
    }

    /// Exact cell means of a 1D weight, computed by quadrature. Nested
    /// refinements of such samples have non-decreasing A_p constants.
    pub fn from_cell_means(grid: BoxGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(LabError::Unsupported("cell means are implemented in 1D".into()));
        }
        let h = grid.spacing(0);
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let a = grid.lower[0] + i as f64 * h;
            let r = integrate(&f, a, a + h, &[], QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, ..Default::default() })?;
            values.push(r.value / h);
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_sampled_csv(&self.grid, &self.values, w)
    }

    pub fn read_csv<R: Read>(grid: BoxGrid, r: R) -> Result<Self> {
        let values = read_sampled_csv(&grid, r)?;
        Self::new(grid, values)
    }
}

/// CSV with one row per cell: midpoint coordinates then the value.
pub fn write_sampled_csv<W: Write>(grid: &BoxGrid, values: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    out.write_record(&header).map_err(csv_err)?;
    for (i, v) in values.iter().enumerate() {
        let mut row: Vec<String> = grid.midpoint(i).iter().map(|x| x.to_string()).collect();
        row.push(v.to_string());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sampled_csv<R: Read>(grid: &BoxGrid, r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let last = rec.get(grid.dim()).ok_or_else(|| LabError::Input("short CSV row".into()))?;
        values.push(last.trim().parse::<f64>().map_err(|e| LabError::Input(e.to_string()))?);
    }
    if values.len() != grid.len() {
        return Err(LabError::Dimension { expected: grid.len(), got: values.len() });
    }
    Ok(values)
}

pub(crate) fn csv_err(e: csv::Error) -> LabError {
    LabError::Input(format!("csv: {e}"))
}

struct Prefix2 {
    ny: usize,
    s: Vec<f64>,
}

impl Prefix2 {
    fn new(nx: usize, ny: usize, v: &[f64]) -> Self {
        let mut s = vec![0.0; (nx + 1) * (ny + 1)];
        for i in 0..nx {
            for j in 0..ny {
                s[(i + 1) * (ny + 1) + j + 1] = v[i * ny + j] + s[i * (ny + 1) + j + 1]
                    + s[(i + 1) * (ny + 1) + j]
                    - s[i * (ny + 1) + j];
            }
        }
        Self { ny, s }
    }

    fn sum(&self, i: usize, j: usize, side: usize) -> f64 {
        let w = self.ny + 1;
        self.s[(i + side) * w + j + side] - self.s[i * w + j + side] - self.s[(i + side) * w + j]
            + self.s[i * w + j]
    }
}

/// [w]_{A_p} of t ↦ t^α on [0, 1] over dyadic refinements 2^level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementSweep {
    pub exponent: f64,
    pub p: f64,
    pub cells: Vec<usize>,
    pub constants: Vec<f64>,
    /// Last level-to-level increment over the first.
    pub increment_ratio: f64,
    /// Increments decay: the constants settle under refinement.
    pub bounded: bool,
}

/// Cell means are used for α > −1 (integrable weights), midpoint samples
/// otherwise.
pub fn power_weight_refinement(exponent: f64, p: f64, levels: &[u32]) -> Result<RefinementSweep> {
    if levels.len() < 3 {
        return input("refinement sweep needs at least three levels");
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || levels.iter().any(|&l| l > 16) {
        return input("refinement levels must increase and stay ≤ 16");
    }
    let mut cells = Vec::with_capacity(levels.len());
    let mut constants = Vec::with_capacity(levels.len());
    for &l in levels {
        let g = BoxGrid::line(0.0, 1.0, 1 << l)?;
        let w = if exponent > -1.0 {
            SampledWeight::from_cell_means(g, |t| t.abs().powf(exponent))?
        } else {
            SampledWeight::from_midpoints(g, |t| t[0].abs().powf(exponent))?
        };
        cells.push(1usize << l);
        constants.push(ap_constant(&w, p, None)?);
    }
    let n = constants.len();
    let first = constants[1] - constants[0];
    let last = constants[n - 1] - constants[n - 2];
    let increment_ratio = if first.abs() > 1e-12 { last / first } else { 0.0 };
    let bounded = first.abs() <= 1e-12 || increment_ratio < 0.9;
    Ok(RefinementSweep { exponent, p, cells, constants, increment_ratio, bounded })
}

/// Brute-force [w]_{A_p}: exhaustive over grid intervals in 1D, over
/// squares of dyadic side length in 2D. `max_side` caps the side length in
/// cells.
pub fn ap_constant(w: &SampledWeight, p: f64, max_side: Option<usize>) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return input(format!("p must lie in (1, ∞), got {p}"));
    }
    if w.values.is_empty() {
        return input("empty grid");
    }
    // [cw]_{A_p} = [w]_{A_p}; normalizing makes constant weights exact.
    let scale = w.values[0];
    let vals: Vec<f64> = w.values.iter().map(|v| v / scale).collect();
    let e = -1.0 / (p - 1.0);
    let dual: Vec<f64> = if p == 2.0 {
        vals.iter().map(|v| 1.0 / v).collect()
    } else {
        vals.iter().map(|v| v.powf(e)).collect()
    };
    let ap = |avg_w: f64, avg_s: f64| -> f64 {
        if p == 2.0 {
            avg_w * avg_s
        } else {
            avg_w * avg_s.powf(p - 1.0)
        }
    };
    let mut best: f64 = 0.0;
    match w.grid.dim() {
        1 => {
            let n = vals.len();
            let cap = max_side.unwrap_or(n).clamp(1, n);
            let mut pw = vec![0.0; n + 1];
            let mut ps = vec![0.0; n + 1];
            for i in 0..n {
                pw[i + 1] = pw[i] + vals[i];
                ps[i + 1] = ps[i] + dual[i];
            }
            for i in 0..n {
                for len in 1..=cap.min(n - i) {
                    let inv = 1.0 / len as f64;
                    let v = ap((pw[i + len] - pw[i]) * inv, (ps[i + len] - ps[i]) * inv);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        2 => {
            let (nx, ny) = (w.grid.cells[0], w.grid.cells[1]);
            let pw = Prefix2::new(nx, ny, &vals);
            let ps = Prefix2::new(nx, ny, &dual);
            let cap = max_side.unwrap_or(nx.min(ny)).min(nx.min(ny)).max(1);
            let mut side = 1;
            while side <= cap {
                let inv = 1.0 / (side * side) as f64;
                for i in 0..=nx - side {
                    for j in 0..=ny - side {
                        let v = ap(pw.sum(i, j, side) * inv, ps.sum(i, j, side) * inv);
                        best = best.max(v);
                    }
                }
                side *= 2;
            }
        }
        _ => unreachable!("grid validated"),
    }
    // Jensen gives ≥ 1 exactly; round-off can dip below.
    Ok(best.max(1.0))
}

/// Grid maximal function of |f|: exhaustive over intervals in 1D, dyadic
/// squares in 2D.
pub fn maximal_operator(grid: &BoxGrid, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != grid.len() {
        return Err(LabError::Dimension { expected: grid.len(), got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return input("maximal operator needs finite values");
    }
    let a: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    match grid.dim() {
        1 => Ok(maximal_1d(&a)),
        2 => {
            let (nx, ny) = (grid.cells[0], grid.cells[1]);
            let pre = Prefix2::new(nx, ny, &a);
            let mut out = a.clone();
            let mut side = 2;
            while side <= nx.min(ny) {
                let inv = 1.0 / (side * side) as f64;
                for i in 0..=nx - side {
                    for j in 0..=ny - side {
                        let avg = pre.sum(i, j, side) * inv;
                        for x in i..i + side {
                            for y in j..j + side {
                                let slot = &mut out[x * ny + y];
                                if avg > *slot {
                                    *slot = avg;
                                }
                            }
                        }
                    }
                }
                side *= 2;
            }
            Ok(out)
        }
        _ => unreachable!("grid validated"),
    }
}

/// O(N²) exhaustive 1D maximal function: for every left end, suffix maxima of
/// the running averages cover all intervals containing each point.
fn maximal_1d(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0f64; n];
    let mut avg = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in i..n {
            s += a[j];
            avg[j] = s / (j - i + 1) as f64;
        }
        let mut run = f64::NEG_INFINITY;
        for k in (i..n).rev() {
            run = run.max(avg[k]);
            if run > out[k] {
                out[k] = run;
            }
        }
    }
    out
}

/// Radially decreasing majorant data for a kernel: |k(u,t)| ≤ h(|t|/u)/u,
/// with h decreasing on [x0, ∞).
#[derive(Clone)]
pub struct MajorantProfile {
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub x0: f64,
    /// Known kinks or jumps of h, passed to the quadrature.
    pub breakpoints: Vec<f64>,
}

impl fmt::Debug for MajorantProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MajorantProfile")
            .field("x0", &self.x0)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

/// C = x0·h(x0) + ∫_{x0}^∞ h.
pub fn kernel_class_constant(profile: &MajorantProfile) -> Result<f64> {
    if !(profile.x0 >= 0.0 && profile.x0.is_finite()) {
        return input("x0 must be a finite non-negative number");
    }
    let head = if profile.x0 > 0.0 { profile.x0 * (profile.h)(profile.x0).abs() } else { 0.0 };
    let h = profile.h.clone();
    let tail = integrate_to_infinity(
        move |x| h(x).abs(),
        profile.x0,
        &profile.breakpoints,
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 2000 },
    )
    .map_err(|e| LabError::Numeric(format!("majorant tail is not integrable: {e}")))?;
    let c = head + tail.value;
    if !c.is_finite() {
        return Err(LabError::Numeric("majorant tail is not integrable".into()));
    }
    Ok(c)
}

/// One-sided kernels live on t > 0, symmetric ones on ℝ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    OneSided,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelShape {
    /// u⁻¹ e^{−t/u} 1_{t>0}
    Exponential,
    /// u⁻¹ 1_{[0,u]}(t)
    Box,
    /// k_α(u,t)·u/t on t > 0, the kernel obtained from the sector Poisson kernel.
    Poisson { alpha: f64 },
    /// Centered Gaussian of standard deviation u.
    Gaussian,
}

/// k(t) = e^{−λt} k_shape(u, t) with optional damping λ ≥ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelWire", into = "KernelWire")]
pub struct Kernel1D {
    pub shape: KernelShape,
    pub scale: f64,
    pub damping: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ShapeName {
    Exponential,
    Box,
    Poisson,
    Gaussian,
}

/// Flat form { shape, alpha?, scale, damping? }.
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelWire {
    shape: ShapeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    scale: f64,
    #[serde(default)]
    damping: f64,
}

impl TryFrom<KernelWire> for Kernel1D {
    type Error = String;

    fn try_from(w: KernelWire) -> std::result::Result<Self, String> {
        let shape = match (w.shape, w.alpha) {
            (ShapeName::Poisson, Some(alpha)) => KernelShape::Poisson { alpha },
            (ShapeName::Poisson, None) => return Err("poisson kernel needs alpha".into()),
            (_, Some(_)) => return Err("alpha applies to poisson kernels only".into()),
            (ShapeName::Exponential, None) => KernelShape::Exponential,
            (ShapeName::Box, None) => KernelShape::Box,
            (ShapeName::Gaussian, None) => KernelShape::Gaussian,
        };
        let k = Kernel1D { shape, scale: w.scale, damping: w.damping };
        k.validate().map_err(|e| e.to_string())?;
        Ok(k)
    }
}

impl From<Kernel1D> for KernelWire {
    fn from(k: Kernel1D) -> Self {
        let (shape, alpha) = match k.shape {
            KernelShape::Exponential => (ShapeName::Exponential, None),
            KernelShape::Box => (ShapeName::Box, None),
            KernelShape::Poisson { alpha } => (ShapeName::Poisson, Some(alpha)),
            KernelShape::Gaussian => (ShapeName::Gaussian, None),
        };
        KernelWire { shape, alpha, scale: k.scale, damping: k.damping }
    }
}

impl Kernel1D {
    pub fn new(shape: KernelShape, scale: f64) -> Result<Self> {
        let k = Self { shape, scale, damping: 0.0 };
        k.validate()?;
        Ok(k)
    }

    pub fn damped(mut self, lambda: f64) -> Result<Self> {
        self.damping = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return input(format!("kernel scale must be positive, got {}", self.scale));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return input("damping must be non-negative");
        }
        if let KernelShape::Poisson { alpha } = self.shape {
            if !(alpha > 0.0 && alpha < PI) {
                return input(format!("Poisson angle must lie in (0, π), got {alpha}"));
            }
        }
        if self.shape == KernelShape::Gaussian && self.damping != 0.0 {
            return input("damping applies to one-sided kernels only");
        }
        Ok(())
    }

    pub fn support(&self) -> Support {
        match self.shape {
            KernelShape::Gaussian => Support::Symmetric,
            _ => Support::OneSided,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let u = self.scale;
        let base = match self.shape {
            KernelShape::Exponential => {
                if t > 0.0 {
                    (-t / u).exp() / u
                } else {
                    0.0
                }
            }
            KernelShape::Box => {
                if t >= 0.0 && t <= u {
                    1.0 / u
                } else {
                    0.0
                }
            }
            KernelShape::Poisson { alpha } => {
                if t > 0.0 {
                    let beta = PI / (2.0 * alpha);
                    let x = t / u;
                    h_alpha(beta, x) / (alpha * u)
                } else {
                    0.0
                }
            }
            KernelShape::Gaussian => (-(t * t) / (2.0 * u * u)).exp() / (u * (2.0 * PI).sqrt()),
        };
        if self.damping > 0.0 && t > 0.0 {
            base * (-self.damping * t).exp()
        } else {
            base
        }
    }

    /// Majorant of the undamped kernel (damping only shrinks |k|). For a
    /// symmetric kernel h is doubled so that C bounds the two-sided mass.
    pub fn profile(&self) -> MajorantProfile {
        match self.shape {
            KernelShape::Exponential => MajorantProfile {
                h: Arc::new(|x: f64| (-x).exp()),
                x0: 0.0,
                breakpoints: vec![],
            },
            KernelShape::Box => MajorantProfile {
                h: Arc::new(|x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }),
                x0: 0.0,
                breakpoints: vec![1.0],
            },
            KernelShape::Poisson { alpha } => {
                let beta = PI / (2.0 * alpha);
                let x0 = if beta > 1.0 { ((beta - 1.0) / (beta + 1.0)).powf(0.5 / beta) } else { 0.0 };
                MajorantProfile {
                    h: Arc::new(move |x: f64| h_alpha(beta, x) / alpha),
                    x0,
                    breakpoints: vec![1.0],
                }
            }
            KernelShape::Gaussian => MajorantProfile {
                h: Arc::new(|x: f64| 2.0 * (-(x * x) / 2.0).exp() / (2.0 * PI).sqrt()),
                x0: 0.0,
                breakpoints: vec![],
            },
        }
    }

    pub fn class_constant(&self) -> Result<f64> {
        kernel_class_constant(&self.profile())
    }

    /// ∫_a^b k(t) dt.
    pub fn cell_integral(&self, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let u = self.scale;
        let lam = self.damping;
        match self.shape {
            KernelShape::Exponential => {
                let (a, b) = (a.max(0.0), b.max(0.0));
                let rate = 1.0 / u + lam;
                Ok(((-rate * a).exp() - (-rate * b).exp()) / (u * rate))
            }
            KernelShape::Box => {
                let (a, b) = (a.clamp(0.0, u), b.clamp(0.0, u));
                if lam == 0.0 {
                    Ok((b - a) / u)
                } else {
                    Ok(((-lam * a).exp() - (-lam * b).exp()) / (lam * u))
                }
            }
            KernelShape::Gaussian => {
                let s = u * 2f64.sqrt();
                Ok(0.5 * (erf(b / s) - erf(a / s)))
            }
            KernelShape::Poisson { .. } => {
                let (a, b) = (a.max(0.0), b.max(0.0));
                if b <= a {
                    return Ok(0.0);
                }
                let r = integrate(|t| self.eval(t), a, b, &[u], QuadOptions { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 400 })?;
                Ok(r.value)
            }
        }
    }

    /// Cell integrals on a grid of step `dt`. One-sided kernels use cells
    /// [n dt, (n+1) dt) for n = 0..len; symmetric kernels use centered cells
    /// with offsets −(len−1)..(len−1), stored from the most negative offset.
    pub fn tabulate(&self, dt: f64, len: usize) -> Result<Vec<f64>> {
        if !(dt > 0.0) || len == 0 {
            return input("tabulation needs dt > 0 and len ≥ 1");
        }
        match self.support() {
            Support::OneSided => (0..len)
                .map(|n| self.cell_integral(n as f64 * dt, (n + 1) as f64 * dt))
                .collect(),
            Support::Symmetric => {
                let l = len as i64 - 1;
                (-l..=l)
                    .map(|n| self.cell_integral((n as f64 - 0.5) * dt, (n as f64 + 0.5) * dt))
                    .collect()
            }
        }
    }

    /// Discrete convolution of cell values `f` with the tabulated |k|.
    /// One-sided kernels are evaluated at right cell edges, symmetric ones at
    /// cell centers; either way the result at cell i is the exact convolution
    /// of the piecewise-constant f at that point.
    pub fn convolve(&self, f: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = f.len();
        let tab = self.tabulate(dt, n.max(1))?;
        let mut out = vec![0.0; n];
        match self.support() {
            Support::OneSided => {
                for i in 0..n {
                    out[i] = (0..=i).map(|j| tab[i - j].abs() * f[j]).sum();
                }
            }
            Support::Symmetric => {
                let c = n as i64 - 1;
                for i in 0..n {
                    out[i] = (0..n)
                        .map(|j| tab[(c + i as i64 - j as i64) as usize].abs() * f[j])
                        .sum();
                }
            }
        }
        Ok(out)
    }
}

fn h_alpha(beta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if beta < 1.0 { f64::INFINITY } else if beta == 1.0 { 1.0 } else { 0.0 };
    }
    // x^{β−1}/(x^{2β}+1) = 1/(2x cosh(β ln x)), stable for extreme x.
    1.0 / (2.0 * x * (beta * x.ln()).cosh())
}

/// k_α(u,t) = (t/u)^β / ((t/u)^{2β}+1) / (αu), β = π/(2α), evaluated as
/// 1/(2αu cosh(β ln(t/u))).
pub fn poisson_kernel(alpha: f64, u: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < PI) {
        return input(format!("α must lie in (0, π), got {alpha}"));
    }
    if !(u > 0.0 && t > 0.0) {
        return input("u and t must be positive");
    }
    let beta = PI / (2.0 * alpha);
    Ok(1.0 / (2.0 * alpha * u * (beta * (t / u).ln()).cosh()))
}

/// ∫₀^∞ h_α(x) dx with h_α(x) = x^{β−1}/(x^{2β}+1).
pub fn poisson_majorant_mass(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < PI) {
        return input(format!("α must lie in (0, π), got {alpha}"));
    }
    let beta = PI / (2.0 * alpha);
    let r = integrate_to_infinity(|x| h_alpha(beta, x), 0.0, &[1.0], QuadOptions::default())?;
    Ok(r.value)
}

/// ∫₀^∞ k_α(u, s) du, computed in the u variable.
pub fn poisson_mass(alpha: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return input("s must be positive");
    }
    let r = integrate_to_infinity(
        |u| if u > 0.0 { poisson_kernel(alpha, u, s).unwrap_or(0.0) } else { 0.0 },
        0.0,
        &[s],
        QuadOptions::default(),
    )?;
    Ok(r.value)
}

/// Σ_{j=±1} ½ ∫₀^∞ k_α(u,s) f(u e^{ijα}) du, via u = s e^y.
pub fn poisson_reproduce(
    alpha: f64,
    s: f64,
    f: impl Fn(Complex64) -> Complex64,
) -> Result<Complex64> {
    if !(alpha > 0.0 && alpha < PI) {
        return input(format!("α must lie in (0, π), got {alpha}"));
    }
    if !(s > 0.0) {
        return input("s must be positive");
    }
    let beta = PI / (2.0 * alpha);
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 };
    let mut total = Complex64::new(0.0, 0.0);
    for j in [-1.0f64, 1.0] {
        let rot = Complex64::from_polar(1.0, j * alpha);
        let g = |y: f64| f(rot * (s * y.exp())) / (2.0 * alpha * (beta * y).cosh());
        let re = integrate_real_line(|y| g(y).re, opts)?;
        let im = integrate_real_line(|y| g(y).im, opts)?;
        total += 0.5 * Complex64::new(re.value, im.value);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_weight_membership() {
        assert!(PowerWeight::new(0.5, 0.0).is_ap(2.0));
        assert!(!PowerWeight::new(-1.0, 0.0).is_ap(2.0));
        assert!(!PowerWeight::new(1.0, 0.0).is_ap(2.0));
        assert_relative_eq!(PowerWeight::new(2.0, 1.0).eval(3.0), 4.0);
    }

    #[test]
    fn constant_weight_is_one() {
        let g = BoxGrid::line(0.0, 1.0, 64).unwrap();
        let w = SampledWeight::constant(g, 3.7).unwrap();
        for p in [1.5, 2.0, 4.0] {
            assert_eq!(ap_constant(&w, p, None).unwrap(), 1.0);
        }
        let g2 = BoxGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![16, 16]).unwrap();
        let w2 = SampledWeight::constant(g2, 0.2).unwrap();
        assert_eq!(ap_constant(&w2, 3.0, None).unwrap(), 1.0);
    }

    #[test]
    fn two_level_weight_fixture() {
        let g = BoxGrid::line(0.0, 2.0, 512).unwrap();
        let w = SampledWeight::from_midpoints(g, |x| if x[0] < 1.0 { 1.0 } else { 2.0 }).unwrap();
        // Exhaustive search lands on the symmetric interval around the jump:
        // (3/2)·(3/4) = 9/8.
        assert_relative_eq!(ap_constant(&w, 2.0, None).unwrap(), 1.125, max_relative = 1e-14);
    }

    #[test]
    fn weight_rejects_bad_samples() {
        let g = BoxGrid::line(0.0, 1.0, 2).unwrap();
        assert!(SampledWeight::new(g.clone(), vec![1.0, 0.0]).is_err());
        assert!(SampledWeight::new(g, vec![1.0]).is_err());
        assert!(BoxGrid::line(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn maximal_indicator_example() {
        // 80 cells on [-4, 4]; the cell ending at x = 2 has index 59.
        let g = BoxGrid::line(-4.0, 4.0, 80).unwrap();
        let f: Vec<f64> = (0..80)
            .map(|i| {
                let x = g.midpoint(i)[0];
                if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }
            })
            .collect();
        let m = maximal_operator(&g, &f).unwrap();
        assert_relative_eq!(m[59], 0.5, max_relative = 1e-14);
        assert!(m.iter().zip(&f).all(|(a, b)| a >= b));
    }

    #[test]
    fn kernel_constants() {
        let e = Kernel1D::new(KernelShape::Exponential, 1.0).unwrap();
        assert_relative_eq!(e.class_constant().unwrap(), 1.0, max_relative = 1e-10);
        let b = Kernel1D::new(KernelShape::Box, 2.0).unwrap();
        assert_relative_eq!(b.class_constant().unwrap(), 1.0, max_relative = 1e-10);
        for alpha in [PI / 6.0, PI / 4.0, PI / 2.0] {
            assert_relative_eq!(poisson_majorant_mass(alpha).unwrap(), alpha, max_relative = 1e-9);
        }
        let diverging = MajorantProfile { h: Arc::new(|x: f64| 1.0 / (1.0 + x)), x0: 0.0, breakpoints: vec![] };
        assert!(matches!(kernel_class_constant(&diverging), Err(LabError::Numeric(_))));
    }

    #[test]
    fn poisson_kernel_values() {
        assert_relative_eq!(poisson_kernel(1.0, 3.0, 3.0).unwrap(), 1.0 / 6.0, max_relative = 1e-15);
        let closed = 2.0 / (4.0 + 1.0) * (2.0 / PI);
        assert_relative_eq!(poisson_kernel(PI / 2.0, 1.0, 2.0).unwrap(), closed, max_relative = 1e-14);
        assert_relative_eq!(closed, 4.0 / (5.0 * PI), max_relative = 1e-15);
        assert!(poisson_kernel(1.0, 1.0, 1e300).unwrap() >= 0.0);
        assert!(poisson_kernel(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn poisson_reproduction() {
        let f = |z: Complex64| 1.0 / (1.0 + z);
        for s in [0.5, 1.0, 2.0] {
            let r = poisson_reproduce(PI / 4.0, s, f).unwrap();
            assert!((r - f(Complex64::new(s, 0.0))).norm() < 1e-9, "{s} {r}");
        }
    }

}

//! Empirical maximal-regularity constants and the per-slice interpolation
//! and domain-equivalence audits.

use super::{integrate, summarize_all, uniform_nodes, MRProblem, C, ZERO};
use crate::error::{input, Result};
use crate::evolution::{CoefficientPath, EvolutionFamily, SliceCoefficients};
use crate::field::{GridField, LqNorm, SobolevNorm, SpaceTimeField};
use crate::rng;
use crate::symbol::{EllipticSymbol, MultiIndex};
use crate::weights::{PowerWeight, SampledWeight};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_random")]
    pub random: usize,
    #[serde(default = "default_resonant")]
    pub resonant: usize,
    /// Largest |k|_∞ in random probes; 0 means N/2.
    #[serde(default)]
    pub bandwidth: usize,
    /// Temporal Fourier modes e^{2πijs}, |j| ≤ this, in random probes.
    #[serde(default = "default_temporal")]
    pub temporal_modes: usize,
}

fn default_random() -> usize {
    32
}

fn default_resonant() -> usize {
    8
}

fn default_temporal() -> usize {
    4
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { random: 32, resonant: 8, bandwidth: 0, temporal_modes: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Random,
    Resonant,
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub kind: ProbeKind,
    pub index: usize,
    pub forcing: SpaceTimeField,
}

/// sin² bump vanishing at both ends of [a, b].
fn envelope(t: f64, a: f64, b: f64) -> f64 {
    let s = (PI * (t - a) / (b - a)).sin();
    s * s
}

/// Time-averaged full symbol at ξ; x-dependent slices are read at the first
/// grid point.
fn mean_symbol(path: &CoefficientPath, xi: &[f64]) -> Result<C> {
    let (a, b) = (path.start(), path.end());
    let mut acc = ZERO;
    for (k, len) in path.overlaps(a, b) {
        let v = match &path.slices()[k] {
            SliceCoefficients::Constant(s) => s.full(xi),
            SliceCoefficients::Field(f) => f.frozen_at(0)?.full(xi),
        };
        acc += v * (len / (b - a));
    }
    Ok(acc)
}

/// Seeded band-limited random forcings plus single-mode forcings whose time
/// frequency cancels the mean oscillation of the symbol. All carry a sin²
/// envelope so the solution starts and ends without layers.
pub fn make_probes(fam: &EvolutionFamily, times: &[f64], spec: &ProbeSpec, seed: u64) -> Result<Vec<Probe>> {
    if spec.random + spec.resonant == 0 {
        return input("probe set is empty");
    }
    if times.len() < 2 {
        return input("probes need at least two time nodes");
    }
    let grid = fam.grid();
    let (a, b) = (times[0], *times.last().expect("non-empty"));
    let half = grid.n() / 2;
    let band_max = if spec.bandwidth == 0 { half } else { spec.bandwidth.min(half) };
    let max_dt = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let omega_cap = 0.1 / max_dt;
    let freqs = grid.frequencies();
    let mut out = Vec::with_capacity(spec.random + spec.resonant);
    for r in 0..spec.random {
        let mut g = rng::stream(seed, rng::tag::PROBE, r as u64);
        let band = g.random_range(1..=band_max) as f64;
        let jm = spec.temporal_modes as i64;
        let mut amps = Vec::new();
        for (i, xi) in freqs.iter().enumerate() {
            if xi.iter().all(|v| v.abs() <= band) {
                for j in -jm..=jm {
                    let re: f64 = g.sample(StandardNormal);
                    let im: f64 = g.sample(StandardNormal);
                    amps.push((i, j, C::new(re, im)));
                }
            }
        }
        let slices = times
            .iter()
            .map(|&t| {
                let s = (t - a) / (b - a);
                let env = envelope(t, a, b);
                let mut c = vec![ZERO; grid.len()];
                for &(i, j, z) in &amps {
                    c[i] += z * C::from_polar(env, 2.0 * PI * j as f64 * s);
                }
                GridField::from_coeffs(grid, c)
            })
            .collect();
        out.push(Probe { kind: ProbeKind::Random, index: r, forcing: SpaceTimeField::new(times.to_vec(), slices)? });
    }
    for r in 0..spec.resonant {
        let frac = if spec.resonant == 1 { 0.0 } else { r as f64 / (spec.resonant - 1) as f64 };
        let k = ((half as f64).ln() * frac).exp().round().max(1.0) as i64;
        let mode: Vec<i64> = if grid.dim() == 1 {
            vec![k]
        } else if r % 2 == 0 {
            vec![k, 0]
        } else {
            vec![k, (k / 2).max(1)]
        };
        let xi: Vec<f64> = mode.iter().map(|&v| v as f64).collect();
        let omega = (-mean_symbol(fam.path(), &xi)?.im).clamp(-omega_cap, omega_cap);
        let base = GridField::mode(grid, &mode, C::new(1.0, 0.0))?;
        let slices =
            times.iter().map(|&t| base.scale(C::from_polar(envelope(t, a, b), omega * t))).collect();
        out.push(Probe {
            kind: ProbeKind::Resonant,
            index: spec.random + r,
            forcing: SpaceTimeField::new(times.to_vec(), slices)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub lambdas: Vec<f64>,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub time_weight: Option<PowerWeight>,
    #[serde(skip)]
    pub space_weight: Option<SampledWeight>,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_end")]
    pub end: f64,
    pub steps: usize,
    #[serde(default)]
    pub probes: ProbeSpec,
    pub seed: u64,
}

fn default_end() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantRow {
    pub lambda: f64,
    /// max over probes of (λ‖u‖ + ‖u‖_MR)/‖f‖.
    pub c_hat: f64,
    pub a0_ratio: f64,
    pub u_prime_ratio: f64,
    pub lambda_u_ratio: f64,
    pub worst_probe: usize,
    pub worst_kind: ProbeKind,
    pub max_residual: f64,
    pub residuals_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantTable {
    pub rows: Vec<ConstantRow>,
    pub sup: f64,
    pub probes: usize,
    pub seed: u64,
}

impl ConstantTable {
    /// (max − min)/max of Ĉ over rows with λ in [lo, hi].
    pub fn relative_spread(&self, lo: f64, hi: f64) -> f64 {
        let vals: Vec<f64> =
            self.rows.iter().filter(|r| r.lambda >= lo && r.lambda <= hi).map(|r| r.c_hat).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if vals.is_empty() {
            f64::NAN
        } else {
            (max - min) / max
        }
    }
}

/// One (p, q, α) norm in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormChoice {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub time_weight: Option<PowerWeight>,
}

/// A scan measuring several norms on the same solves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub norms: Vec<NormChoice>,
    #[serde(skip)]
    pub space_weight: Option<SampledWeight>,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_end")]
    pub end: f64,
    pub steps: usize,
    #[serde(default)]
    pub probes: ProbeSpec,
    pub seed: u64,
}

#[derive(Clone, Copy)]
struct ProbeOutcome {
    ratio: f64,
    a0: f64,
    up: f64,
    lu: f64,
}

pub fn mr_constant_estimate(fam: &Arc<EvolutionFamily>, spec: &ScanSpec) -> Result<ConstantTable> {
    let sweep = SweepSpec {
        lambdas: spec.lambdas.clone(),
        norms: vec![NormChoice { p: spec.p, q: spec.q, time_weight: spec.time_weight }],
        space_weight: spec.space_weight.clone(),
        start: spec.start,
        end: spec.end,
        steps: spec.steps,
        probes: spec.probes.clone(),
        seed: spec.seed,
    };
    Ok(mr_constant_sweep(fam, &sweep)?.remove(0))
}

/// One table per norm choice, all from the same probe solves.
pub fn mr_constant_sweep(fam: &Arc<EvolutionFamily>, spec: &SweepSpec) -> Result<Vec<ConstantTable>> {
    if spec.lambdas.is_empty() || spec.norms.is_empty() {
        return input("sweep needs λ values and at least one norm");
    }
    if spec.lambdas.iter().any(|l| !l.is_finite()) {
        return input("λ values must be finite");
    }
    if spec.steps == 0 || !(spec.end > spec.start) {
        return input("scan needs steps ≥ 1 and end > start");
    }
    let times = uniform_nodes(spec.start, spec.end, spec.steps);
    let probes = make_probes(fam, &times, &spec.probes, spec.seed)?;
    let problems = spec
        .norms
        .iter()
        .map(|nc| {
            let mut prob = MRProblem::new(fam.clone(), spec.lambdas[0], probes[0].forcing.clone(), nc.p, nc.q)?;
            if let Some(v) = nc.time_weight {
                prob = prob.with_time_weight(v)?;
            }
            if let Some(w) = &spec.space_weight {
                prob = prob.with_space_weight(w.clone())?;
            }
            Ok(prob)
        })
        .collect::<Result<Vec<_>>>()?;
    let kits = problems.iter().map(|p| p.norm_kit()).collect::<Result<Vec<_>>>()?;
    let base = &problems[0];
    let jobs: Vec<(usize, usize)> =
        (0..spec.lambdas.len()).flat_map(|l| (0..probes.len()).map(move |p| (l, p))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(l, p)| -> Result<(Vec<Option<ProbeOutcome>>, f64, bool)> {
            let lam = spec.lambdas[l];
            let prob = base.with_lambda(lam).with_forcing(probes[p].forcing.clone())?;
            let (tr, residual) = integrate(&prob)?;
            let per_norm = summarize_all(&kits, &tr)
                .into_iter()
                .map(|n| {
                    (n.forcing > 0.0).then(|| ProbeOutcome {
                        ratio: n.shifted(lam) / n.forcing,
                        a0: n.a0u / n.forcing,
                        up: n.u_prime / n.forcing,
                        lu: lam * n.u / n.forcing,
                    })
                })
                .collect();
            Ok((per_norm, residual, residual <= prob.tolerance()))
        })
        .collect::<Result<Vec<_>>>()?;
    let tables = (0..spec.norms.len())
        .map(|ni| {
            let rows: Vec<ConstantRow> = spec
                .lambdas
                .iter()
                .enumerate()
                .map(|(l, &lambda)| {
                    let mut row = ConstantRow {
                        lambda,
                        c_hat: 0.0,
                        a0_ratio: 0.0,
                        u_prime_ratio: 0.0,
                        lambda_u_ratio: 0.0,
                        worst_probe: 0,
                        worst_kind: ProbeKind::Random,
                        max_residual: 0.0,
                        residuals_ok: true,
                    };
                    for (p, probe) in probes.iter().enumerate() {
                        let (per_norm, residual, passed) = &outcomes[l * probes.len() + p];
                        row.max_residual = row.max_residual.max(*residual);
                        row.residuals_ok &= *passed;
                        if let Some(o) = per_norm[ni] {
                            if o.ratio > row.c_hat {
                                row.c_hat = o.ratio;
                                row.worst_probe = probe.index;
                                row.worst_kind = probe.kind;
                            }
                            row.a0_ratio = row.a0_ratio.max(o.a0);
                            row.u_prime_ratio = row.u_prime_ratio.max(o.up);
                            row.lambda_u_ratio = row.lambda_u_ratio.max(o.lu);
                        }
                    }
                    row
                })
                .collect();
            let sup = rows.iter().map(|r| r.c_hat).fold(0.0, f64::max);
            ConstantTable { rows, sup, probes: probes.len(), seed: spec.seed }
        })
        .collect();
    Ok(tables)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub m: u32,
    pub q: f64,
    /// (λ̃, largest ratio seen at that λ̃).
    pub per_lambda: Vec<(f64, f64)>,
    /// One constant for every field, |β| ≤ m − 1 and λ̃.
    pub constant: f64,
    pub fields: usize,
}

/// Smallest C with ‖D^β u‖ ≤ C(λ̃^{|β|/m}‖u‖ + λ̃^{−(m−|β|)/m}[u]_{W^{m,q}})
/// over the given fields.
pub fn interpolation_constant(fields: &[GridField], m: u32, q: f64, lambdas: &[f64]) -> Result<InterpolationReport> {
    if fields.is_empty() || lambdas.is_empty() {
        return input("interpolation audit needs fields and λ values");
    }
    if m == 0 || lambdas.iter().any(|l| !(*l > 0.0)) {
        return input("interpolation audit needs m ≥ 1 and λ > 0");
    }
    let grid = fields[0].grid();
    let lq = LqNorm::new(grid, q, None)?;
    let sob = SobolevNorm::new(grid, m, lq.clone());
    let betas = MultiIndex::up_to_order(grid.dim(), m - 1);
    let tables: Vec<(u32, Vec<C>)> = betas
        .iter()
        .map(|b| (b.order(), grid.multiplier_table(|xi| C::new(b.monomial(xi), 0.0)).expect("finite")))
        .collect();
    let mut per_lambda: Vec<(f64, f64)> = lambdas.iter().map(|&l| (l, 0.0)).collect();
    for f in fields {
        if f.grid() != grid {
            return input("fields live on different grids");
        }
        let coeffs = f.coeffs();
        let (_, semi) = sob.norms_from_coeffs(&coeffs);
        let u_norm = lq.norm(f.values());
        for (order, table) in &tables {
            let lhs = f.apply_table(table).values().to_vec();
            let lhs = lq.norm(&lhs);
            for entry in per_lambda.iter_mut() {
                let l = entry.0;
                let b = *order as f64;
                let m = m as f64;
                let rhs = l.powf(b / m) * u_norm + l.powf(-(m - b) / m) * semi;
                if rhs > 0.0 {
                    entry.1 = entry.1.max(lhs / rhs);
                }
            }
        }
    }
    let constant = per_lambda.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(InterpolationReport { m, q, per_lambda, constant, fields: fields.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEquivalence {
    /// min ‖(λ+A)u‖ / ‖u‖_{W^{m,q}}.
    pub lower: f64,
    /// max of the same ratio.
    pub upper: f64,
    /// K + λ.
    pub bound: f64,
}

/// Two-sided comparison of ‖(λ+A)u‖_q with ‖u‖_{W^{m,q}} for an
/// x-independent symbol.
pub fn domain_equivalence(
    sym: &EllipticSymbol,
    lambda: f64,
    fields: &[GridField],
    q: f64,
    w: Option<&SampledWeight>,
) -> Result<DomainEquivalence> {
    if fields.is_empty() {
        return input("domain audit needs fields");
    }
    let grid = fields[0].grid();
    let lq = LqNorm::new(grid, q, w)?;
    let sob = SobolevNorm::new(grid, sym.order(), lq.clone());
    let table = grid.multiplier_table(|xi| lambda + sym.full(xi))?;
    let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
    for f in fields {
        let (full, _) = sob.norms_from_coeffs(&f.coeffs());
        if full == 0.0 {
            continue;
        }
        let r = lq.norm(f.apply_table(&table).values()) / full;
        lower = lower.min(r);
        upper = upper.max(r);
    }
    Ok(DomainEquivalence { lower, upper, bound: sym.max_coeff() + lambda })
}

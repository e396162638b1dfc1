//! Localization audit for x-dependent coefficients: for u supported in a
//! small ball around x₀, the estimate for the frozen operator A(·, x₀)
//! transfers to A(·, x) with twice the constant.

use super::{apply_operator, NormKit, Trajectory, C};
use crate::error::{input, Result};
use crate::evolution::{CoefficientPath, EvolutionFamily, SliceCoefficients};
use crate::field::{GridField, TorusGrid};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezingSpec {
    pub x0: Vec<f64>,
    /// Support radius ε of the probes.
    pub radius: f64,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "one")]
    pub end: f64,
    pub steps: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Temporal frequencies are drawn from [−ω_max, ω_max].
    #[serde(default = "default_omega")]
    pub omega_max: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_probes() -> usize {
    16
}

fn default_omega() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezingReport {
    pub radius: f64,
    pub c_hat: f64,
    /// (λ‖u‖ + ‖u‖_MR) / ‖(λ+A)u + u′‖ per probe.
    pub ratios: Vec<f64>,
    pub worst_ratio: f64,
    /// Largest |a_α(t,x) − a_α(t,x₀)| over top-order α and |x − x₀| ≤ ε.
    pub oscillation: f64,
    /// oscillation ≤ 1/(2Ĉ).
    pub below_threshold: bool,
    /// worst_ratio ≤ 2Ĉ.
    pub pass: bool,
}

fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn nearest_index(grid: TorusGrid, x0: &[f64]) -> usize {
    (0..grid.len())
        .min_by(|&i, &j| torus_distance(&grid.coords(i), x0).total_cmp(&torus_distance(&grid.coords(j), x0)))
        .expect("grid is non-empty")
}

/// The path with every x-dependent slice frozen at the grid point nearest x₀.
pub fn frozen_path(path: &CoefficientPath, x0: &[f64]) -> Result<CoefficientPath> {
    let slices = path
        .slices()
        .iter()
        .map(|s| match s {
            SliceCoefficients::Constant(_) => Ok(s.clone()),
            SliceCoefficients::Field(f) => {
                Ok(SliceCoefficients::Constant(f.frozen_at(nearest_index(f.grid(), x0))?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CoefficientPath::new(path.breakpoints().to_vec(), slices)
}

fn oscillation(path: &CoefficientPath, x0: &[f64], radius: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in path.slices() {
        if let SliceCoefficients::Field(f) = s {
            let g = f.grid();
            let c = nearest_index(g, x0);
            for (a, v) in f.coeffs() {
                if a.order() != f.order() {
                    continue;
                }
                for i in 0..g.len() {
                    if torus_distance(&g.coords(i), x0) <= radius {
                        worst = worst.max((v[i] - v[c]).norm());
                    }
                }
            }
        }
    }
    worst
}

/// Largest radius π·2^{−j}, j ≤ 30, whose top-order oscillation around x₀
/// is at most 1/(2Ĉ).
pub fn freezing_threshold(path: &CoefficientPath, x0: &[f64], c_hat: f64) -> f64 {
    let target = 1.0 / (2.0 * c_hat);
    let mut r = PI;
    for _ in 0..30 {
        if oscillation(path, x0, r) <= target {
            return r;
        }
        r /= 2.0;
    }
    r
}

/// `c_hat` is the maximal-regularity constant measured for the frozen path.
pub fn freezing_audit(fam: &EvolutionFamily, spec: &FreezingSpec, c_hat: f64) -> Result<FreezingReport> {
    let grid = fam.grid();
    if spec.x0.len() != grid.dim() {
        return input("x₀ has the wrong dimension");
    }
    if !(spec.radius > 0.0) || spec.probes == 0 || spec.steps == 0 || !(spec.end > spec.start) {
        return input("freezing audit needs radius > 0, probes ≥ 1, steps ≥ 1 and end > start");
    }
    fam.parabolic()?;
    let times = super::uniform_nodes(spec.start, spec.end, spec.steps);
    let kit = NormKit::new(
        grid,
        fam.path().order(),
        fam.delta(),
        spec.p,
        spec.q,
        None,
        None,
        &times,
        None,
    )?;
    let dist: Vec<f64> = (0..grid.len()).map(|i| torus_distance(&grid.coords(i), &spec.x0)).collect();
    if !dist.iter().any(|&d| d < spec.radius) {
        return input("probe support contains no grid point");
    }
    let (a, b) = (spec.start, spec.end);
    let len = b - a;
    let mut ratios = Vec::with_capacity(spec.probes);
    for r in 0..spec.probes {
        let mut g = rng::stream(spec.seed, rng::tag::FIELD, r as u64);
        let modes: Vec<(Vec<f64>, C)> = (0..6)
            .map(|_| {
                let k: Vec<f64> = (0..grid.dim()).map(|_| g.random_range(-3i64..=3) as f64).collect();
                let re: f64 = g.sample(StandardNormal);
                let im: f64 = g.sample(StandardNormal);
                (k, C::new(re, im))
            })
            .collect();
        let omega = spec.omega_max * (2.0 * g.random::<f64>() - 1.0);
        let phi = GridField::from_fn(grid, |x| {
            let d = torus_distance(x, &spec.x0) / spec.radius;
            if d >= 1.0 {
                return C::new(0.0, 0.0);
            }
            let bump = (1.0 - 1.0 / (1.0 - d * d)).exp();
            let wave: C = modes
                .iter()
                .map(|(k, z)| z * C::from_polar(1.0, k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()))
                .sum();
            wave * bump
        });
        if phi.values().iter().zip(&dist).any(|(v, &d)| d >= spec.radius && v.norm() > 0.0) {
            return input("probe leaves the ball around x₀");
        }
        let phi_hat = phi.coeffs();
        // u = e(t)e^{iωt}φ with e(t) = sin²(π(t−a)/len).
        let amp = |t: f64| {
            let s = PI * (t - a) / len;
            C::from_polar(s.sin().powi(2), omega * t)
        };
        let damp = |t: f64| {
            let s = PI * (t - a) / len;
            let env = s.sin().powi(2);
            let denv = (PI / len) * (2.0 * s).sin();
            C::new(denv, omega * env) * C::from_polar(1.0, omega * t)
        };
        let scale = |c: C| phi_hat.iter().map(|v| v * c).collect::<Vec<C>>();
        let nodes: Vec<Vec<C>> = times.iter().map(|&t| scale(amp(t))).collect();
        let mut mids = Vec::new();
        let mut deriv = Vec::new();
        let mut ops = Vec::new();
        let mut forcing = Vec::new();
        for w in times.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let u = scale(amp(t));
            let du = scale(damp(t));
            let op = apply_operator(fam, t, &u);
            let f: Vec<C> = (0..u.len()).map(|i| du[i] + spec.lambda * u[i] + op[i]).collect();
            mids.push(u);
            deriv.push(du);
            ops.push(op);
            forcing.push(f);
        }
        let tr = Trajectory::from_parts(grid, times.clone(), nodes, mids, deriv, ops, forcing);
        let n = kit.summarize(&tr);
        ratios.push(n.shifted(spec.lambda) / n.forcing);
    }
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let osc = oscillation(fam.path(), &spec.x0, spec.radius);
    Ok(FreezingReport {
        radius: spec.radius,
        c_hat,
        ratios,
        worst_ratio,
        oscillation: osc,
        below_threshold: osc <= 1.0 / (2.0 * c_hat),
        pass: worst_ratio <= 2.0 * c_hat,
    })
}

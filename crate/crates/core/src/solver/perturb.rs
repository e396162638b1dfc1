//! Lower-order perturbations by fixed-point iteration, and convergence
//! under time mollification of the coefficients.

use super::{apply_operator, integrate, mild_solve, MRProblem, SolveReport, C};
use crate::error::{input, LabError, Result};
use crate::evolution::EvolutionFamily;
use crate::field::{GridField, SpaceTimeField, TorusGrid};
use crate::symbol::{MultiIndex, Symbol};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// sup over grid frequencies of |b(ξ)| / Σ_{|α|≤m} |ξ^α|; the relative
/// size ε of B against the W^{m,2} norm per mode.
pub fn perturbation_size(grid: TorusGrid, b: &Symbol, m: u32) -> f64 {
    let alphas = MultiIndex::up_to_order(grid.dim(), m);
    grid.frequencies()
        .iter()
        .map(|xi| {
            let den: f64 = alphas.iter().map(|a| a.monomial(xi).abs()).sum();
            b.eval(xi).norm() / den
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedReport {
    pub report: SolveReport,
    pub iterations: usize,
    /// λ‖Δw‖ + ‖Δw‖_MR of successive iterates.
    pub increments: Vec<f64>,
    /// Largest ratio of successive increments.
    pub contraction: f64,
    pub epsilon: f64,
    pub converged: bool,
}

/// Iterates w ← mild solution with forcing f − B w, measured in
/// λ‖·‖ + ‖·‖_MR. Rejected unless ε·Ĉ_A < 1.
pub fn perturbed_solve(
    prob: &MRProblem,
    b: &Symbol,
    epsilon: f64,
    c_a: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PerturbedReport> {
    let grid = prob.family().grid();
    let m = prob.family().path().order();
    if b.dim() != grid.dim() {
        return input("perturbation dimension differs from the grid");
    }
    if b.order() >= m {
        return input("perturbation must be of lower order");
    }
    if !(epsilon >= 0.0) || epsilon * c_a >= 1.0 {
        return input(format!("ε·Ĉ_A = {} must be below 1 for a contraction", epsilon * c_a));
    }
    let measured = perturbation_size(grid, b, m);
    if measured > epsilon * (1.0 + 1e-12) {
        return input(format!("ε = {epsilon} underestimates the perturbation size {measured}"));
    }
    let table = grid.multiplier_table(|xi| b.eval(xi))?;
    let kit = prob.norm_kit()?;
    let lam = prob.lambda();
    let f = prob.forcing();
    let mut current = mild_solve(prob)?;
    let mut increments = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let slices = f
            .slices()
            .iter()
            .zip(current.trajectory.node_coeffs())
            .map(|(fk, wk)| {
                let bw: Vec<C> = wk.iter().zip(&table).map(|(w, t)| w * t).collect();
                fk.sub(&GridField::from_coeffs(grid, bw))
            })
            .collect::<Result<Vec<_>>>()?;
        let next = mild_solve(&prob.with_forcing(SpaceTimeField::new(f.times().to_vec(), slices)?)?)?;
        let diff = next.trajectory.difference(&current.trajectory)?;
        let inc = kit.summarize(&diff).shifted(lam);
        let size = next.norms.shifted(lam);
        increments.push(inc);
        current = next;
        if inc <= tol * size.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let contraction = increments
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    if !converged {
        return Err(LabError::Convergence(format!(
            "perturbation iteration did not settle in {max_iter} steps (last increment {:e})",
            increments.last().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(PerturbedReport {
        report: current,
        iterations: increments.len(),
        increments,
        contraction,
        epsilon,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifyRow {
    pub width: f64,
    /// ‖u_h − u‖_MR.
    pub error: f64,
    /// ‖(A_h − A)u‖ in L^p_v(L^q_w).
    pub commutator: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifyReport {
    pub rows: Vec<MollifyRow>,
    /// Errors decrease along the second half of the sweep.
    pub monotone_tail: bool,
    pub max_ratio: f64,
}

/// Solves with coefficients averaged over moving windows of each width
/// (widths in decreasing order) and compares with the unmollified solution.
pub fn mollify_convergence(prob: &MRProblem, widths: &[f64]) -> Result<MollifyReport> {
    if widths.is_empty() {
        return input("mollification sweep is empty");
    }
    if widths.windows(2).any(|w| !(w[1] < w[0])) {
        return input("mollification widths must decrease");
    }
    let fam = prob.family();
    let kit = prob.norm_kit()?;
    let (base, _) = integrate(prob)?;
    let times = prob.forcing().times();
    let mut rows = Vec::with_capacity(widths.len());
    for &h in widths {
        let path = fam.path().mollified(h, times)?;
        let fam_h = Arc::new(EvolutionFamily::new(fam.grid(), path, fam.backend(), fam.delta())?);
        let (tr, _) = integrate(&prob.with_family(fam_h.clone())?)?;
        let error = kit.summarize(&tr.difference(&base)?).mr;
        let comm: Vec<f64> = (0..base.midpoint_coeffs().len())
            .map(|k| {
                let t = 0.5 * (times[k] + times[k + 1]);
                let u = &base.midpoint_coeffs()[k];
                let a = apply_operator(fam, t, u);
                let ah = apply_operator(&fam_h, t, u);
                let d: Vec<C> = ah.iter().zip(&a).map(|(x, y)| x - y).collect();
                kit.lq_of_coeffs(&d)
            })
            .collect();
        let commutator = kit.time_norm(&comm);
        rows.push(MollifyRow {
            width: h,
            error,
            commutator,
            ratio: if commutator > 0.0 { error / commutator } else { 0.0 },
        });
    }
    let tail = &rows[rows.len() / 2..];
    let monotone_tail = tail.windows(2).all(|w| w[1].error <= w[0].error);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(MollifyReport { rows, monotone_tail, max_ratio })
}

//! Acceptance criteria 1–14. Each test prints one `criterion N: PASS|FAIL`
//! line before asserting.

use mrlab::evolution::{random_triples, Backend, CoefficientPath, EvolutionFamily, RoughPathSpec};
use mrlab::experiment::{parse_config, run_config, run_experiment, write_artifacts, Experiment};
use mrlab::field::{GridField, SpaceTimeField, TorusGrid};
use mrlab::quasilinear::{
    constants_probe, horizon_recipe, lipschitz_in_data, manufactured_error, quasilinear_solve_with,
    CoefficientLaw, ForcingLaw, HorizonMode, QuasilinearProblem,
};
use mrlab::rbound::{
    draw_probe, rbound_sample, uniform_bound_check, OperatorFamily, OperatorKind, ProbeShape, SignMode,
};
use mrlab::rng;
use mrlab::solver::{
    interpolation_constant, mild_solve, mr_constant_estimate, mr_constant_sweep, uniform_nodes, MRProblem,
    NormChoice, ProbeSpec, ScanSpec, SweepSpec,
};
use mrlab::weights::{
    ap_constant, maximal_operator, poisson_majorant_mass, poisson_reproduce, power_weight_refinement, BoxGrid,
    Kernel1D, KernelShape, PowerWeight, SampledWeight,
};
use mrlab::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn rough_spec(slices: usize) -> RoughPathSpec {
    RoughPathSpec {
        dim: 1,
        order: 2,
        start: 0.0,
        end: 1.0,
        slices,
        modulus_min: 0.5,
        modulus_max: 2.0,
        max_angle: 0.95 * PI / 3.0,
        lower_order: 0.0,
    }
}

fn family(grid: TorusGrid, path: CoefficientPath, backend: Backend, delta: f64) -> Arc<EvolutionFamily> {
    Arc::new(EvolutionFamily::new(grid, path, backend, delta).unwrap())
}

#[test]
fn criterion_01_heat_closed_form() {
    let grid = TorusGrid::new(1, 128).unwrap();
    let clock = Instant::now();
    let path = CoefficientPath::constant(
        mrlab::symbol::EllipticSymbol::laplacian_power(1, 2, C::new(1.0, 0.0)).unwrap(),
        0.0,
        1.0,
    )
    .unwrap();
    let fam = family(grid, path, Backend::ModeDiagonal, 0.25);
    let times = uniform_nodes(0.0, 1.0, 200);
    let f = GridField::mode(grid, &[1], C::new(1.0, 0.0)).unwrap();
    let forcing = SpaceTimeField::new(times.clone(), vec![f; times.len()]).unwrap();
    let rep = mild_solve(&MRProblem::new(fam, 0.0, forcing, 2.0, 2.0).unwrap()).unwrap();
    let got = rep.solution().last().coeffs()[grid.index_of(&[1]).unwrap()];
    let elapsed = clock.elapsed().as_secs_f64();
    let want = 1.0 - (-1.0f64).exp();
    let rel = (got - want).norm() / want;
    report(
        1,
        rel <= 1e-8 && elapsed < 1.0,
        format!("amplitude {:.15} vs 1 − e⁻¹, relative error {rel:.2e}, runtime {elapsed:.3}s", got.re),
    );
}

#[test]
fn criterion_02_cocycle() {
    let spec = rough_spec(8);
    let mode_grid = TorusGrid::new(1, 64).unwrap();
    let dense_grid = TorusGrid::new(1, 16).unwrap();
    let (mut mode_worst, mut dense_worst) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let path = CoefficientPath::rough(&spec, 21, i).unwrap();
        let free = random_triples(&path, 100, false, rng::child_seed(21, rng::tag::TRIPLE, i));
        let aligned = random_triples(&path, 100, true, rng::child_seed(22, rng::tag::TRIPLE, i));
        let m = family(mode_grid, path.clone(), Backend::ModeDiagonal, 0.125).family_audit(&free).unwrap();
        let d = family(dense_grid, path, Backend::Dense, 0.125).family_audit(&aligned).unwrap();
        mode_worst = mode_worst.max(m.max_cocycle_defect).max(m.max_identity_defect);
        dense_worst = dense_worst.max(d.max_cocycle_defect).max(d.max_identity_defect);
    }
    report(
        2,
        mode_worst <= 1e-12 && dense_worst <= 1e-9,
        format!("mode defect {mode_worst:.2e} (≤ 1e-12), dense defect {dense_worst:.2e} (≤ 1e-9)"),
    );
}

#[test]
fn criterion_03_factorization() {
    let spec = rough_spec(8);
    let grid = TorusGrid::new(1, 64).unwrap();
    let kappa = spec.modulus_min;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let path = CoefficientPath::rough(&spec, 21, i).unwrap();
        let fam = family(grid, path, Backend::ModeDiagonal, kappa / 4.0);
        let mut g = rng::stream(23, rng::tag::TRIPLE, i);
        for _ in 0..50 {
            let (x, y): (f64, f64) = (g.random(), g.random());
            let (s, t) = (x.min(y), x.max(y));
            let f = fam.factorize(s, t).unwrap();
            let direct = fam.mode_multiplier(s, t).unwrap();
            let d = f.compose().iter().zip(&direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    report(3, worst <= 1e-12, format!("largest per-mode defect {worst:.2e} with δ = κ/4"));
}

#[test]
fn criterion_04_mr_estimate() {
    let clock = Instant::now();
    let grid = TorusGrid::new(1, 32).unwrap();
    let spec = rough_spec(16);
    let mut norms = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        for q in [1.5, 2.0, 3.0] {
            for alpha in [0.0, 0.5 * (p - 1.0)] {
                let time_weight = (alpha > 0.0).then(|| PowerWeight::new(alpha, 0.0));
                norms.push(NormChoice { p, q, time_weight });
            }
        }
    }
    let lambdas = vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    let lam0 = lambdas[0];
    let mut sups = vec![Vec::new(); norms.len()];
    let mut worst_spread = 0.0f64;
    let mut finite = true;
    for i in 0..20 {
        let path = CoefficientPath::rough(&spec, 41, i).unwrap();
        let fam = family(grid, path, Backend::ModeDiagonal, spec.modulus_min / 4.0);
        let sweep = SweepSpec {
            lambdas: lambdas.clone(),
            norms: norms.clone(),
            space_weight: None,
            start: 0.0,
            end: 1.0,
            steps: 256,
            probes: ProbeSpec::default(),
            seed: 43,
        };
        for (k, t) in mr_constant_sweep(&fam, &sweep).unwrap().iter().enumerate() {
            finite &= t.rows.iter().all(|r| r.c_hat.is_finite() && r.residuals_ok);
            worst_spread = worst_spread.max(t.relative_spread(lam0, 100.0 * lam0));
            sups[k].push(t.sup);
        }
    }
    let path_ratio = sups
        .iter()
        .map(|v| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let elapsed = clock.elapsed().as_secs_f64();
    report(
        4,
        finite && worst_spread < 0.25 && path_ratio < 2.0 && elapsed < 600.0,
        format!(
            "λ₀ = {lam0}: spread over [λ₀, 100λ₀] {:.1}%, path spread {path_ratio:.3}×, runtime {elapsed:.1}s",
            100.0 * worst_spread
        ),
    );
}

#[test]
fn criterion_05_hilbert_oracle() {
    let grid = TorusGrid::new(1, 32).unwrap();
    let spec = RoughPathSpec { modulus_min: 1.0, max_angle: 0.0, ..rough_spec(12) };
    let mut worst = 0.0f64;
    for i in 0..5 {
        let path = CoefficientPath::rough(&spec, 51, i).unwrap();
        let fam = family(grid, path, Backend::ModeDiagonal, 1.0);
        let scan = ScanSpec {
            lambdas: vec![0.0, 1.0, 10.0],
            p: 2.0,
            q: 2.0,
            time_weight: None,
            space_weight: None,
            start: 0.0,
            end: 1.0,
            steps: 256,
            probes: ProbeSpec::default(),
            seed: 53,
        };
        let t = mr_constant_estimate(&fam, &scan).unwrap();
        worst = worst.max(t.rows.iter().map(|r| r.a0_ratio).fold(0.0, f64::max));
    }
    report(5, worst <= 1.0 + 1e-3, format!("largest ‖A₀u‖/‖f‖ = {worst:.6}"));
}

fn random_fields(grid: TorusGrid, count: usize, seed: u64) -> Vec<GridField> {
    (0..count)
        .map(|i| {
            let mut g = rng::stream(seed, rng::tag::FIELD, i as u64);
            let band = g.random_range(1.0..=grid.n() as f64 / 2.0);
            let coeffs = grid
                .frequencies()
                .iter()
                .map(|xi| {
                    if xi[0].abs() <= band {
                        let (re, im): (f64, f64) = (g.sample(StandardNormal), g.sample(StandardNormal));
                        C::new(re, im)
                    } else {
                        C::new(0.0, 0.0)
                    }
                })
                .collect();
            GridField::from_coeffs(grid, coeffs)
        })
        .collect()
}

#[test]
fn criterion_06_interpolation() {
    let grid = TorusGrid::new(1, 64).unwrap();
    let fields = random_fields(grid, 100, 61);
    let lambdas = [1.0, 10.0, 100.0];
    let mut parts = Vec::new();
    let mut ok = true;
    for m in [2, 4] {
        let r2 = interpolation_constant(&fields, m, 2.0, &lambdas).unwrap();
        let r3 = interpolation_constant(&fields, m, 3.0, &lambdas).unwrap();
        ok &= r2.constant <= 1.0 + 1e-12 && r3.constant.is_finite() && r3.constant > 0.0;
        parts.push(format!("m={m}: C₂ = {:.4}, C₃ = {:.4}", r2.constant, r3.constant));
    }
    report(6, ok, parts.join("; "));
}

#[test]
fn criterion_07_weights() {
    let g = BoxGrid::line(0.0, 1.0, 256).unwrap();
    let c = ap_constant(&SampledWeight::constant(g, 3.7).unwrap(), 2.0, None).unwrap();
    let levels = [7, 8, 9, 10, 11];
    let mut ok = c == 1.0;
    let mut parts = vec![format!("[const]_A₂ = {c}")];
    for alpha in [-1.2, -0.5, 0.5, 1.0, 1.5] {
        let s = power_weight_refinement(alpha, 2.0, &levels).unwrap();
        let inside = PowerWeight::new(alpha, 0.0).is_ap(2.0);
        ok &= s.bounded == inside;
        parts.push(format!(
            "α={alpha}: {:.3}→{:.3} ({})",
            s.constants[0],
            s.constants[4],
            if s.bounded { "bounded" } else { "blows up" }
        ));
    }
    report(7, ok, parts.join(", "));
}

#[test]
fn criterion_08_kernel_class() {
    let mut ok = true;
    let mut parts = Vec::new();
    for (shape, scale) in [(KernelShape::Exponential, 0.3), (KernelShape::Box, 0.7)] {
        let c = Kernel1D::new(shape, scale).unwrap().class_constant().unwrap();
        ok &= (c - 1.0).abs() <= 1e-6;
        parts.push(format!("{shape:?} C = {c:.9}"));
    }
    for alpha in [PI / 6.0, PI / 4.0, PI / 2.0] {
        let m = poisson_majorant_mass(alpha).unwrap();
        ok &= (m - alpha).abs() <= 1e-6;
        parts.push(format!("∫h = α err {:.1e}", (m - alpha).abs()));
    }
    let tests: [(&str, Holo); 3] = [
        ("1/(1+z)", |z| 1.0 / (1.0 + z)),
        ("e^{−z}", |z| (-z).exp()),
        ("1/(2+z)²", |z| 1.0 / ((2.0 + z) * (2.0 + z))),
    ];
    let mut worst = 0.0f64;
    for (_, f) in tests {
        for s in [0.5, 1.0, 3.0] {
            let r = poisson_reproduce(PI / 4.0, s, f).unwrap();
            worst = worst.max((r - f(C::new(s, 0.0))).norm());
        }
    }
    ok &= worst <= 1e-6;
    parts.push(format!("reproduction err {worst:.1e}"));
    report(8, ok, parts.join(", "));
}

type Holo = fn(C) -> C;

fn brute_maximal(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|x| {
            let mut best = 0.0f64;
            for i in 0..=x {
                for j in x..n {
                    let s: f64 = a[i..=j].iter().sum();
                    best = best.max(s / (j - i + 1) as f64);
                }
            }
            best
        })
        .collect()
}

#[test]
fn criterion_09_maximal_operator() {
    let mut mismatches = 0;
    let mut total = 0;
    for seed in 0..100u64 {
        let mut g = rng::stream(seed, rng::tag::FIELD, 9);
        let n = g.random_range(1..=64usize);
        let f: Vec<f64> = (0..n).map(|_| g.random_range(-50i32..=50) as f64).collect();
        let grid = BoxGrid::line(0.0, 1.0, n).unwrap();
        let fast = maximal_operator(&grid, &f).unwrap();
        let a: Vec<f64> = f.iter().map(|v| v.abs()).collect();
        let slow = brute_maximal(&a);
        total += n;
        mismatches += fast.iter().zip(&slow).filter(|(x, y)| x != y).count();
    }
    report(9, mismatches == 0, format!("{mismatches} mismatches over {total} samples from 100 signals"));
}

fn experiment(toml_text: &str) -> Experiment {
    parse_config(toml_text, None).unwrap().experiments.remove(0)
}

#[test]
fn criterion_10_freezing() {
    let e = experiment(
        r#"
[[experiments]]
kind = "audit"
name = "freezing"
[[experiments.checks]]
check = "freezing"
grid = { n = 32 }
path = { slices = 4, base = 1.0, amp = 0.3, max_wavenumber = 2 }
paths = 10
lambda = 1.0
steps = 128
probes = 16
"#,
    );
    let o = run_experiment(&e, 101).unwrap();
    let t = &o.tables[0];
    let worst = t
        .rows
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap() / (2.0 * r[2].parse::<f64>().unwrap()))
        .fold(0.0, f64::max);
    report(10, o.passed(), format!("10 paths, largest ratio/(2Ĉ) = {worst:.4}"));
}

#[test]
fn criterion_11_quasilinear() {
    let clock = Instant::now();
    let grid = TorusGrid::new(1, 128).unwrap();
    let u0 = GridField::from_fn(grid, |x| C::new(x[0].sin(), 0.0));
    let law = CoefficientLaw::SinState { base: 1.0, amp: 0.5 };
    let prob = QuasilinearProblem::new(grid, 4.0, 4.0, law, ForcingLaw::Manufactured, u0, 1.0, 200)
        .unwrap()
        .with_mode(HorizonMode::Full)
        .with_probes(8, 3);
    let c = constants_probe(&prob).unwrap();
    let recipe = horizon_recipe(&prob, &c).unwrap();
    let (rep, full) = quasilinear_solve_with(&prob, &c, &recipe).unwrap();
    let err = manufactured_error(&prob, &rep).unwrap();
    let late = full.ratios.iter().skip(1).copied().fold(0.0, f64::max);
    let tight = prob.clone().with_mode(HorizonMode::Recipe).with_iteration(1e-22, 50);
    let (_, rec) = quasilinear_solve_with(&tight, &c, &recipe).unwrap();
    let entry = rec.contraction_after_entry.unwrap_or(0.0);
    let lip = lipschitz_in_data(&prob, &c, &recipe, 5, 1e-3).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    report(
        11,
        err <= 1e-4
            && late <= 0.5
            && rec.entered_at.is_some()
            && entry <= 0.5
            && lip.stable
            && lip.within_bound
            && elapsed < 300.0,
        format!(
            "‖u−u*‖_MR = {err:.2e}, ratios {late:.3} (full) / {entry:.3} (in ball, T = {:.2e}), Lipschitz [{:.3}, {:.3}] ≤ {:.2}, runtime {elapsed:.1}s",
            rec.horizon, lip.min, lip.max, lip.bound
        ),
    );
}

#[test]
fn criterion_12_rbound() {
    let grid = TorusGrid::new(1, 8).unwrap();
    let kernels = vec![
        Kernel1D::new(KernelShape::Exponential, 0.1).unwrap(),
        Kernel1D::new(KernelShape::Box, 0.2).unwrap(),
        Kernel1D::new(KernelShape::Gaussian, 0.05).unwrap(),
    ];
    let fam = OperatorFamily::new(
        OperatorKind::Scalar { bound: 1.0, count: 6 },
        kernels,
        grid,
        0.0,
        1.0,
        64,
        2.0,
        2.0,
        None,
        121,
    )
    .unwrap();
    let mut gap = 0.0f64;
    let mut best = 0.0f64;
    for n in [2, 4, 6, 8, 10] {
        let ex = rbound_sample(&fam, n, 10, ProbeShape::Random, SignMode::Exhaustive, 123).unwrap();
        let mc = rbound_sample(&fam, n, 10, ProbeShape::Random, SignMode::MonteCarlo { samples: 1000 }, 123).unwrap();
        for (a, b) in [(mc.estimate, ex.estimate), (mc.band.1, ex.band.1)] {
            gap = gap.max((a - b).abs() / b);
        }
        best = best.max(ex.estimate).max(mc.estimate);
    }
    let probes: Vec<_> = (0..10).map(|i| draw_probe(&fam, ProbeShape::Random, 125, i).unwrap()).collect();
    let u = uniform_bound_check(&fam, &probes).unwrap();
    report(
        12,
        gap <= 0.05 && best.is_finite() && best <= 1.5 * u.bound && u.within,
        format!("MC vs exhaustive gap {:.2}%, R̂ {best:.4} ≤ 1.5 × uniform {:.4}", 100.0 * gap, u.bound),
    );
}

#[test]
fn criterion_13_mollification() {
    let e = experiment(
        r#"
[[experiments]]
kind = "audit"
name = "mollify"
[[experiments.checks]]
check = "mollify"
grid = { n = 32 }
path = { type = "rough", spec = { dim = 1, order = 2, slices = 2, modulus_min = 0.5, modulus_max = 2.0, max_angle = 0.99 } }
paths = 5
lambda = 1.0
steps = 256
forcing = { type = "mode", k = [2] }
widths = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625]
"#,
    );
    let o = run_experiment(&e, 131).unwrap();
    let t = &o.tables[0];
    let worst = t.rows.iter().map(|r| r[4].parse::<f64>().unwrap()).fold(0.0, f64::max);
    report(13, o.passed(), format!("5 single-breakpoint paths, largest error/commutator {worst:.4}; {}", o.checks[0].detail));
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_14_determinism() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let cfg = parse_config(&text, Some(&path)).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let run = run_config(&cfg, None).unwrap();
        write_artifacts(d.path(), &cfg, &run).unwrap();
    }
    let (a, b) = (csv_bytes(dirs[0].path()), csv_bytes(dirs[1].path()));
    report(
        14,
        !a.is_empty() && a == b,
        format!("{} CSV files, byte-identical across two runs", a.len()),
    );
}

use mrlab::experiment::{parse_config, validate};
use mrlab::field::TorusGrid;
use mrlab::rbound::{rbound_sample, OperatorFamily, OperatorKind, ProbeShape, SignMode};
use mrlab::rng;
use mrlab::weights::{ap_constant, maximal_operator, BoxGrid, Kernel1D, KernelShape, SampledWeight};
use proptest::prelude::*;
use rand::Rng;

fn scalar_family(bound: f64, kernels: Vec<Kernel1D>, seed: u64) -> OperatorFamily {
    let g = TorusGrid::new(1, 8).unwrap();
    OperatorFamily::new(OperatorKind::Scalar { bound, count: 4 }, kernels, g, 0.0, 1.0, 16, 2.0, 2.0, None, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maximal_function_dominates_modulus(f in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let g = BoxGrid::line(0.0, 1.0, f.len()).unwrap();
        let m = maximal_operator(&g, &f).unwrap();
        for (mi, fi) in m.iter().zip(&f) {
            prop_assert!(*mi >= fi.abs() - 1e-12);
        }
    }

    #[test]
    fn ap_constant_is_at_least_one(w in prop::collection::vec(0.01f64..100.0, 2..32), p in 1.2f64..4.0) {
        let g = BoxGrid::line(0.0, 1.0, w.len()).unwrap();
        let c = ap_constant(&SampledWeight::new(g, w).unwrap(), p, None).unwrap();
        prop_assert!(c >= 1.0);
    }

    #[test]
    fn ap_constant_ignores_scaling(w in prop::collection::vec(0.1f64..10.0, 2..16), s in 0.01f64..100.0) {
        let g = BoxGrid::line(0.0, 1.0, w.len()).unwrap();
        let a = ap_constant(&SampledWeight::new(g.clone(), w.clone()).unwrap(), 2.0, None).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * s).collect();
        let b = ap_constant(&SampledWeight::new(g, scaled).unwrap(), 2.0, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn monotone_kernels_sit_in_the_class(scale in 0.01f64..10.0) {
        for shape in [KernelShape::Exponential, KernelShape::Box] {
            let c = Kernel1D::new(shape, scale).unwrap().class_constant().unwrap();
            prop_assert!(c <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), tag in 0u64..16, index in 0u64..1000) {
        let a: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, tag, index); move |_| r.random() }).collect();
        let b: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, tag, index); move |_| r.random() }).collect();
        let c: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, tag, index + 1); move |_| r.random() }).collect();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rbound_scales_with_the_multiplier_bound(seed in 0u64..1000, s in 0.1f64..1.0) {
        let k = Kernel1D::new(KernelShape::Exponential, 0.1).unwrap();
        let full = scalar_family(1.0, vec![k], seed);
        let part = scalar_family(s, vec![k], seed);
        let a = rbound_sample(&full, 3, 2, ProbeShape::Random, SignMode::Exhaustive, seed).unwrap();
        let b = rbound_sample(&part, 3, 2, ProbeShape::Random, SignMode::Exhaustive, seed).unwrap();
        prop_assert!((b.estimate - s * a.estimate).abs() <= 1e-9 * a.estimate.max(1e-300));
    }

    #[test]
    fn rbound_dominates_single_operators(seed in 0u64..1000, n in 1usize..6) {
        let k = Kernel1D::new(KernelShape::Box, 0.2).unwrap();
        let fam = scalar_family(1.0, vec![k], seed);
        let est = rbound_sample(&fam, n, 2, ProbeShape::Random, SignMode::Exhaustive, seed).unwrap();
        prop_assert!(est.estimate >= est.single_max);
        prop_assert!(est.per_draw.iter().all(|r| *r <= est.estimate));
        prop_assert_eq!(est.patterns, 1usize << (n - 1));
    }
}

#[test]
fn rbound_sampling_is_reproducible() {
    let k = Kernel1D::new(KernelShape::Exponential, 0.1).unwrap();
    let fam = scalar_family(1.0, vec![k], 3);
    let mc = SignMode::MonteCarlo { samples: 64 };
    let a = rbound_sample(&fam, 4, 3, ProbeShape::Random, mc, 11).unwrap();
    let b = rbound_sample(&fam, 4, 3, ProbeShape::Random, mc, 11).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let text = "seed = 1\n[[experiments]]\nkind = \"solve\"\nname = \"x\"\ngrid = { n = 8 }\npath = { type = \"laplacian\" }\nsteps = 4\nbogus = 1\n";
    assert!(parse_config(text, None).is_err());
}

#[test]
fn empty_config_fails_validation() {
    let cfg = parse_config("seed = 1\nexperiments = []\n", None).unwrap();
    assert!(validate(&cfg).is_err());
}

#[test]
fn json_and_toml_agree() {
    let toml = "seed = 4\n[[experiments]]\nkind = \"weights\"\nname = \"w\"\np = 2.0\nalphas = [0.5]\nlevels = [4, 5, 6]\n";
    let json = r#"{"seed": 4, "experiments": [{"kind": "weights", "name": "w", "p": 2.0, "alphas": [0.5], "levels": [4, 5, 6]}]}"#;
    let a = parse_config(toml, None).unwrap();
    let b = parse_config(json, None).unwrap();
    assert_eq!(serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
}

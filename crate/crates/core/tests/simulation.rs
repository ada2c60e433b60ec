//! Reproducibility and invariances of the sampler and the generator quadrature.

use proptest::prelude::*;
use stablesde::fields::{make_additive_baseline, CoefficientField};
use stablesde::operator::{frac_laplacian, QuadratureSpec};
use stablesde::simulator::{sample_invariant, wilson_interval, Scheme, SimConfig, Simulator};
use stablesde::stable_noise::{sample_isotropic_stable, sample_sym_stable_1d, StableSpec};

fn batch_cfg(seed: u64) -> SimConfig {
    SimConfig {
        step: 1e-2,
        horizon: 2.0 + 49.0 * 0.1,
        n_paths: 16,
        seed,
        scheme: Scheme::Tamed,
        ..SimConfig::default()
    }
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let field = make_additive_baseline(1.5, 1, &QuadratureSpec::default()).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_invariant(&field, &batch_cfg(7), 2.0, 0.1).unwrap())
    };
    let one = run(1);
    assert_eq!(one.states.len(), 16 * 50);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn seeds_select_independent_streams() {
    let field = make_additive_baseline(1.5, 1, &QuadratureSpec::default()).unwrap();
    let a = sample_invariant(&field, &batch_cfg(7), 2.0, 0.1).unwrap();
    let b = sample_invariant(&field, &batch_cfg(8), 2.0, 0.1).unwrap();
    assert_ne!(a.states, b.states);
    assert_ne!(a.config_hash, b.config_hash);
}

#[test]
fn single_path_is_a_prefix_of_the_ensemble() {
    let field = CoefficientField::pure_noise(1.2, 2).unwrap();
    let cfg = SimConfig {
        n_paths: 5,
        horizon: 0.3,
        ..SimConfig::default()
    };
    let sim = Simulator::new(&field, &cfg).unwrap();
    let all = sim.terminal_states(&[0.0, 0.0]).unwrap();
    for k in [0u64, 3] {
        assert_eq!(sim.path(&[0.0, 0.0], k).unwrap().terminal(), all[k as usize].as_slice());
    }
}

#[test]
fn noise_samples_are_reproducible() {
    assert_eq!(sample_sym_stable_1d(0.9, 100, 5).unwrap(), sample_sym_stable_1d(0.9, 100, 5).unwrap());
    let spec = StableSpec::with_scale(1.3, 3, 1.0).unwrap();
    let a = sample_isotropic_stable(&spec, 50, 2).unwrap();
    assert_eq!(a, sample_isotropic_stable(&spec, 50, 2).unwrap());
    assert!(a.iter().all(|x| x.len() == 3 && x.iter().all(|v| v.is_finite())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fractional_laplacian_is_translation_invariant(shift in -3.0f64..3.0, x in -2.0f64..2.0) {
        let quad = QuadratureSpec::default();
        let g = |y: &[f64]| (-y[0] * y[0]).exp();
        let gs = move |y: &[f64]| (-(y[0] - shift) * (y[0] - shift)).exp();
        let a = frac_laplacian(&g, &[x], 1.3, &quad).unwrap().value;
        let b = frac_laplacian(&gs, &[x + shift], 1.3, &quad).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
    }

    #[test]
    fn fractional_laplacian_scales_with_dilation(lambda in 0.5f64..2.0, x in -1.5f64..1.5) {
        // g_l(y) = g(l y) has Delta^{a/2} g_l(y) = l^a (Delta^{a/2} g)(l y).
        let quad = QuadratureSpec::default();
        let alpha = 0.8;
        let g = |y: &[f64]| (-y[0] * y[0]).exp();
        let gl = move |y: &[f64]| (-(lambda * y[0]).powi(2)).exp();
        let lhs = frac_laplacian(&gl, &[x], alpha, &quad).unwrap().value;
        let rhs = lambda.powf(alpha) * frac_laplacian(&g, &[lambda * x], alpha, &quad).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()));
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}

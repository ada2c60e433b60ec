//! Diagnostics against closed forms and brute-force oracles.

use proptest::prelude::*;
use rand::Rng;
use stablesde::diagnostics::{
    ergodic_average, heatkernel_shape, hill_tail_index, hk_reference_cdf, hk_reference_quantile,
    ks_distance, ks_null_band, ks_two_sample, target_cdf, CdfKind, HeatKernelOptions,
};
use stablesde::fields::{CoefficientField, Mollifier, TargetSpec};
use stablesde::operator::QuadratureSpec;
use stablesde::rng::stream_rng;
use stablesde::simulator::{SimConfig, Trajectory};

/// Sup distance between the empirical CDF and `cdf`, checked at every
/// sample from both sides by direct counting.
fn brute_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = xs.len() as f64;
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64 / n;
            let upto = xs.iter().filter(|&&y| y <= x).count() as f64 / n;
            (below - cdf(x)).abs().max((upto - cdf(x)).abs())
        })
        .fold(0.0, f64::max)
}

fn brute_ks2(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&y| y <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn pareto(index: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / index)).collect()
}

#[test]
fn cauchy_line_cdf_matches_closed_form() {
    let cdf = target_cdf(&TargetSpec::student(1, 1.0).unwrap(), &QuadratureSpec::default()).unwrap();
    assert_eq!(cdf.kind, CdfKind::Line);
    for x in [-1e4, -30.0, -2.0, -0.3, 0.0, 0.7, 5.0, 1e3, 1e6] {
        let exact = 0.5 + f64::atan(x) / std::f64::consts::PI;
        assert!((cdf.cdf(x) - exact).abs() < 1e-8, "x={x}: {} vs {exact}", cdf.cdf(x));
    }
    assert!((cdf.z - std::f64::consts::PI).abs() < 1e-8);
}

#[test]
fn student_two_line_cdf_matches_closed_form() {
    let cdf = target_cdf(&TargetSpec::student(1, 2.0).unwrap(), &QuadratureSpec::default()).unwrap();
    for x in [-50.0f64, -1.0, 0.0, 0.25, 3.0, 400.0] {
        let exact = 0.5 + x / (2.0 * (1.0 + x * x).sqrt());
        assert!((cdf.cdf(x) - exact).abs() < 1e-8, "x={x}");
    }
}

#[test]
fn radial_cdf_in_two_dimensions_matches_closed_form() {
    let cdf = target_cdf(&TargetSpec::student(2, 1.0).unwrap(), &QuadratureSpec::default()).unwrap();
    assert_eq!(cdf.kind, CdfKind::Radial);
    for r in [0.0f64, 0.1, 1.0, 4.0, 100.0] {
        let exact = 1.0 - 1.0 / (1.0 + r * r).sqrt();
        assert!((cdf.cdf(r) - exact).abs() < 1e-8, "r={r}");
    }
    assert_eq!(cdf.cdf(-1.0), 0.0);
}

#[test]
fn quantile_inverts_cdf() {
    let cdf = target_cdf(&TargetSpec::student(1, 1.0).unwrap(), &QuadratureSpec::default()).unwrap();
    for p in [1e-4, 0.01, 0.3, 0.5, 0.9, 0.999] {
        let q = cdf.quantile(p).unwrap();
        let exact = (std::f64::consts::PI * (p - 0.5)).tan();
        assert!((q - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "p={p}: {q} vs {exact}");
    }
}

#[test]
fn expectation_of_bounded_function() {
    // E[1/(1+X^2)] = 1/2 under the standard Cauchy law.
    let cdf = target_cdf(&TargetSpec::student(1, 1.0).unwrap(), &QuadratureSpec::default()).unwrap();
    let e = cdf.expectation(|x| 1.0 / (1.0 + x * x)).unwrap();
    assert!((e - 0.5).abs() < 1e-8, "{e}");
}

#[test]
fn hill_interval_covers_true_index_for_pareto_samples() {
    let mut covered = 0;
    for seed in 0..100 {
        let xs = pareto(1.0, 10_000, seed);
        let h = hill_tail_index(&xs, 500).unwrap();
        if h.ci_low <= 1.0 && 1.0 <= h.ci_high {
            covered += 1;
        }
    }
    assert!(covered >= 90, "coverage {covered}/100");
}

#[test]
fn hill_on_pareto_is_stable_and_exponential_is_not() {
    let h = hill_tail_index(&pareto(1.5, 20_000, 3), 1000).unwrap();
    assert!(!h.unstable, "{h:?}");
    let mut rng = stream_rng(4, 0);
    let exp: Vec<f64> = (0..20_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let h = hill_tail_index(&exp, 1000).unwrap();
    assert!(h.unstable, "{h:?}");
}

#[test]
fn hill_rejects_bad_k() {
    let xs = pareto(1.0, 100, 0);
    assert!(hill_tail_index(&xs, 0).is_err());
    assert!(hill_tail_index(&xs, 50).is_err());
}

#[test]
fn reference_profile_quantile_and_cdf_are_inverse() {
    for alpha in [0.6, 1.0, 1.7] {
        for p in [0.01, 0.2, 0.5, 0.77, 0.999] {
            let u = hk_reference_quantile(p, 0.05, alpha);
            assert!((hk_reference_cdf(u, 0.05, alpha) - p).abs() < 1e-12);
        }
    }
}

#[test]
fn heat_kernel_coverage_is_monotone_in_band() {
    let field = CoefficientField::pure_noise(1.5, 1).unwrap();
    let cfg = SimConfig {
        step: 1e-3,
        n_paths: 4000,
        seed: 2,
        ..SimConfig::default()
    };
    let quad = QuadratureSpec::default();
    let moll = Mollifier::new(1, 0.5).unwrap();
    let hk = heatkernel_shape(&field, &[0.0], 0.05, &cfg, &moll, &quad, &HeatKernelOptions::default())
        .unwrap();
    assert_eq!(hk.bins.len(), 48);
    assert!(hk.bins[0].lo.is_none() && hk.bins[47].hi.is_none());
    assert_eq!(hk.binned_mass, 1.0);
    let mut last = 0.0;
    for c in [1.0, 1.1, 1.5, 2.0, 5.0, 25.0, 1e3] {
        let cov = hk.coverage_at(c);
        assert!(cov >= last, "c={c}");
        last = cov;
    }
    assert_eq!(hk.coverage_at(1e9), 1.0);
    assert!(hk.coverage > 0.95, "{}", hk.coverage);
}

#[test]
fn ergodic_average_of_linear_path() {
    // X_t = t on [0, 10]; left-point average of t over [0, T] is (T - h)/2.
    let h = 0.01;
    let times: Vec<f64> = (0..=1000).map(|k| k as f64 * h).collect();
    let traj = Trajectory {
        states: times.iter().map(|&t| vec![t]).collect(),
        times,
        exited_at: None,
    };
    let e = ergodic_average(|x| x[0], &traj, Some(5.0)).unwrap();
    assert!((e.limit - (10.0 - h) / 2.0).abs() < 1e-9, "{}", e.limit);
    assert!((e.gap.unwrap() + h / 2.0).abs() < 1e-9);
    let c = ergodic_average(|_| 3.0, &traj, None).unwrap();
    assert!(c.averages.iter().all(|&a| (a - 3.0).abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_matches_brute_force(xs in prop::collection::vec(-3.0f64..3.0, 1..60)) {
        let cdf = |x: f64| 1.0 / (1.0 + (-x).exp());
        let fast = ks_distance(&xs, cdf).unwrap();
        prop_assert!((fast.statistic - brute_ks(&xs, cdf)).abs() < 1e-12);
        prop_assert!((fast.null_band - ks_null_band(xs.len())).abs() < 1e-15);
    }

    #[test]
    fn two_sample_ks_matches_brute_force_and_is_symmetric(
        a in prop::collection::vec(-5i32..5, 1..40),
        b in prop::collection::vec(-5i32..5, 1..40),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = ks_two_sample(&a, &b).unwrap().statistic;
        let ba = ks_two_sample(&b, &a).unwrap().statistic;
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((ab - brute_ks2(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn hill_is_scale_invariant(seed in 0u64..1000, scale in 1e-3f64..1e3) {
        let xs = pareto(1.2, 400, seed);
        let ys: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        let a = hill_tail_index(&xs, 50).unwrap();
        let b = hill_tail_index(&ys, 50).unwrap();
        prop_assert!((a.index - b.index).abs() <= 1e-9 * a.index);
    }

    #[test]
    fn target_cdf_is_monotone(xs in prop::collection::vec(-1e7f64..1e7, 2..40)) {
        let cdf = target_cdf(&TargetSpec::student(1, 1.5).unwrap(), &QuadratureSpec::default()).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = xs.iter().map(|&x| cdf.cdf(x)).collect();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

//! Throughput of the inner kernels: noise draws, the jump quadrature,
//! drift-field evaluation, Euler steps and the KS distance.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use stablesde::diagnostics::{ks_distance, target_cdf};
use stablesde::fields::{make_additive_baseline, TargetSpec};
use stablesde::operator::{frac_laplacian, QuadratureSpec};
use stablesde::simulator::{Scheme, SimConfig, Simulator};
use stablesde::stable_noise::{sample_isotropic_stable, sample_sym_stable_1d, StableSpec};

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("noise");
    let n = 100_000;
    g.throughput(Throughput::Elements(n as u64));
    for alpha in [0.7, 1.5] {
        g.bench_with_input(BenchmarkId::new("sym_1d", alpha), &alpha, |b, &a| {
            b.iter(|| sample_sym_stable_1d(a, n, black_box(1)).unwrap())
        });
    }
    let spec = StableSpec::with_scale(1.5, 3, 1.0).unwrap();
    g.bench_function("isotropic_3d", |b| {
        b.iter(|| sample_isotropic_stable(&spec, n, black_box(1)).unwrap())
    });
    g.finish();
}

fn quadrature(c: &mut Criterion) {
    let quad = QuadratureSpec::default();
    let gauss = |y: &[f64]| (-y.iter().map(|v| v * v).sum::<f64>()).exp();
    let mut g = c.benchmark_group("frac_laplacian");
    for d in [1usize, 2] {
        let x = vec![0.3; d];
        g.bench_with_input(BenchmarkId::new("gaussian", d), &x, |b, x| {
            b.iter(|| frac_laplacian(&gauss, black_box(x), 1.5, &quad).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let quad = QuadratureSpec::default();
    let field = make_additive_baseline(1.5, 1, &quad).unwrap();
    let cfg = SimConfig {
        step: 1e-3,
        horizon: 1.0,
        n_paths: 64,
        scheme: Scheme::Tamed,
        ..SimConfig::default()
    };
    let sim = Simulator::new(&field, &cfg).unwrap();
    let mut g = c.benchmark_group("simulate");
    g.throughput(Throughput::Elements((cfg.n_paths * cfg.n_steps()) as u64));
    g.bench_function("additive_1d_steps", |b| b.iter(|| sim.terminal_states(black_box(&[0.0])).unwrap()));
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let quad = QuadratureSpec::default();
    let cdf = target_cdf(&TargetSpec::student(1, 1.0).unwrap(), &quad).unwrap();
    let xs = sample_sym_stable_1d(1.0, 100_000, 3).unwrap();
    let mut g = c.benchmark_group("diagnostics");
    g.throughput(Throughput::Elements(xs.len() as u64));
    g.bench_function("ks_100k", |b| b.iter(|| ks_distance(black_box(&xs), |x| cdf.cdf(x)).unwrap()));
    g.bench_function("target_cdf_build", |b| {
        b.iter(|| target_cdf(&TargetSpec::student(1, 1.0).unwrap(), &quad).unwrap())
    });
    g.finish();
}

criterion_group!(benches, noise, quadrature, simulation, diagnostics);
criterion_main!(benches);

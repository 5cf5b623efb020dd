use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nonlocal_core::{builtin_model, differentiate, integrate, parse, step_rk4, AtomField, IntegratorConfig};

/// `n` equal cells with values spread over `[lo, hi]`.
fn spread(n: usize, lo: f64, hi: f64) -> AtomField {
    let values: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64)
        .collect();
    AtomField::from_samples(&values, 1.0).unwrap()
}

fn rk4_step(c: &mut Criterion) {
    let pair = builtin_model("logistic-identity").unwrap();
    let mut group = c.benchmark_group("rk4_step");
    for n in [2, 64, 1024] {
        let u = spread(n, 1.2, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| step_rk4(black_box(u), 1e-3, &pair, None).unwrap())
        });
    }
    group.finish();
}

fn integrate_h1(c: &mut Criterion) {
    let pair = builtin_model("logistic-identity").unwrap();
    let cfg = IntegratorConfig {
        t_max: 20.0,
        ..IntegratorConfig::default()
    };
    let mut group = c.benchmark_group("integrate_h1");
    group.sample_size(20);
    for n in [2, 64] {
        let u = spread(n, 1.2, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| integrate(black_box(u), &pair, &cfg).unwrap())
        });
    }
    group.finish();
}

fn rearrange(c: &mut Criterion) {
    let mut group = c.benchmark_group("rearrange");
    for n in [64, 4096] {
        // Interleave values so the sort has work to do.
        let values: Vec<f64> = (0..n).map(|k| ((k * 7919) % n) as f64 / n as f64).collect();
        let u = AtomField::from_samples(&values, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| b.iter(|| black_box(u).rearrange()));
    }
    group.finish();
}

fn parse_and_differentiate(c: &mut Criterion) {
    let text = "u*(1 - u)*exp(-u^2/2) + tanh(3*u)/(1 + u^2) - log(2 + sin(u))";
    c.bench_function("parse", |b| b.iter(|| parse(black_box(text)).unwrap()));
    let e = parse(text).unwrap();
    c.bench_function("differentiate", |b| b.iter(|| differentiate(black_box(&e))));
}

criterion_group!(benches, rk4_step, integrate_h1, rearrange, parse_and_differentiate);
criterion_main!(benches);

use std::hint::black_box;

use comprior::priors::jeffreys_log_density;
use comprior::{log_normalizer, logz_hessian, CmpParams, TruncationPolicy};
use comprior_bench::SETTINGS;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn series(c: &mut Criterion) {
    let policy = TruncationPolicy::default();
    let mut group = c.benchmark_group("series");
    for (name, l, n) in SETTINGS {
        let p = CmpParams::new(l, n).unwrap();
        group.bench_with_input(BenchmarkId::new("log_normalizer", name), &p, |b, p| {
            b.iter(|| log_normalizer(black_box(p), &policy).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("logz_hessian", name), &p, |b, p| {
            b.iter(|| logz_hessian(black_box(p), &policy).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("jeffreys", name), &p, |b, p| {
            b.iter(|| jeffreys_log_density(black_box(p), &policy).unwrap())
        });
    }
    // slow-decaying series that needs adaptive extension
    let wide = CmpParams::new(20.0, 0.3).unwrap();
    group.bench_function("log_normalizer/wide", |b| {
        b.iter(|| log_normalizer(black_box(&wide), &policy).unwrap())
    });
    group.finish();
}

criterion_group!(benches, series);
criterion_main!(benches);

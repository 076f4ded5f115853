use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fppf_bench::fixture;
use fppf_core::{certify, fppf_solve, newton_solve, NewtonConfig, SolveOptions, StiffnessSet};

fn fixed_point(c: &mut Criterion) {
    let mut group = c.benchmark_group("fppf_solve");
    for n in [10, 50, 200] {
        let (net, stiff) = fixture(n, n / 5 + 1, true, 0.8);
        let opts = SolveOptions::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fppf_solve(&net, &stiff, &opts).unwrap())
        });
    }
    group.finish();
}

fn newton(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton_flat_start");
    for n in [10, 50, 200] {
        let (net, stiff) = fixture(n, n / 5 + 1, true, 0.8);
        let cfg = NewtonConfig::flat(&net, &stiff);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| newton_solve(&net, &cfg).unwrap())
        });
    }
    group.finish();
}

fn certificates(c: &mut Criterion) {
    let mut group = c.benchmark_group("certify");
    for (name, load_load) in [("per_bus", false), ("aggregate", true)] {
        let (net, stiff) = fixture(200, 41, load_load, 0.8);
        group.bench_function(name, |b| b.iter(|| certify(&net, &stiff).unwrap()));
    }
    group.finish();
}

fn stiffness(c: &mut Criterion) {
    let (net, _) = fixture(200, 41, true, 0.8);
    c.bench_function("stiffness_200", |b| b.iter(|| StiffnessSet::compute(&net).unwrap()));
}

criterion_group!(benches, fixed_point, newton, certificates, stiffness);
criterion_main!(benches);

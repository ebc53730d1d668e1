use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kppwave_core::bbmpe::{simulate, Observables, SimConfig};
use kppwave_core::par::{map_replicates_par, map_replicates_seq};
use kppwave_core::spectral::{SpectralSolution, DEFAULT_GRID};
use kppwave_core::{GSpec, OffspringDist, PeriodicEnv};

fn replicates(c: &mut Criterion) {
    let env = PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), DEFAULT_GRID, OffspringDist::binary()).unwrap();
    let spec = SpectralSolution::compute(&env, 1.0, DEFAULT_GRID).unwrap();
    let cfg = SimConfig::default();
    let one = |r: u64| {
        let obs = Observables { additive: Some(&spec), derivative: None };
        let tr = simulate(&env, 0.0, 3.0, 42, r, &cfg, obs).unwrap().trace;
        *tr.additive.last().unwrap()
    };
    let mut group = c.benchmark_group("replicates");
    group.sample_size(10);
    for n in [64u64, 256] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| b.iter(|| map_replicates_seq(n, one)));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| b.iter(|| map_replicates_par(n, one)));
    }
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);

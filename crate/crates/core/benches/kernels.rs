//! Solver kernels on a one-thread pool versus the default pool.
//!
//! Build with `--no-default-features` to time the sequential code path instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zdjscc::analysis::{monte_carlo_eval, GridSampler};
use zdjscc::density::parse_density_spec;
use zdjscc::{ProblemInstance, SampledMapping};

fn problem() -> (ProblemInstance, SampledMapping) {
    let x = parse_density_spec("gmm:w=0.5,0.5;mu=-3,3;var=1,1", 0.01, 5.0).unwrap();
    let z = parse_density_spec("gaussian:var=1", 0.01, 5.0).unwrap();
    let p = ProblemInstance::new(x, z, 0.05).unwrap();
    let g = SampledMapping::from_fn(p.source().grid().clone(), 1, |x, y| y[0] = x[0] + 0.5 * x[0].sin()).unwrap();
    (p, g)
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn kernels(c: &mut Criterion) {
    let (p, g) = problem();
    let h = p.decoder_for(&g).unwrap();
    let sx = GridSampler::new(p.source()).unwrap();
    let sz = GridSampler::new(p.noise()).unwrap();
    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("decoder", name), |b| b.iter(|| pool.install(|| p.decoder_for(&g).unwrap())));
        group.bench_function(BenchmarkId::new("distortion", name), |b| {
            b.iter(|| pool.install(|| p.distortion(&g, &h).unwrap()))
        });
        group.bench_function(BenchmarkId::new("gradient", name), |b| {
            b.iter(|| pool.install(|| p.encoder_gradient(&g, &h).unwrap()))
        });
        group.bench_function(BenchmarkId::new("monte_carlo_1e5", name), |b| {
            b.iter(|| pool.install(|| monte_carlo_eval(&g, &h, &sx, &sz, 100_000, 1).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);

//! Sequential vs parallel execution of the data-parallel kernels: batch map
//! application, per-sequence gradients and finite-difference probes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lienet_core::propagator::apply_batch_with;
use lienet_core::reference::Rk4;
use lienet_core::{
    build_map, learn::loss_and_grad_with, map_to_ode, parse_ode, BuilderConfig, Execution,
    InterpretConfig, TimeSeriesDataset, DEFAULT_GUARD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HENON_HEILES: &str = "q1' = p1 ; q2' = p2 ; p1' = -q1 - 2*q1*q2 ; p2' = -q2 - q1^2 + q2^2";
const SIR: &str = "S' = -0.5*I*S ; I' = 0.5*I*S - 0.1*I ; R' = 0.1*I";

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if Execution::parallel_available() {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn bench_apply_batch(c: &mut Criterion) {
    let ode = parse_ode(HENON_HEILES).unwrap();
    let map = build_map(&ode, 0.01, &BuilderConfig::new(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("apply_batch");
    for size in [1_000usize, 100_000] {
        let states: Vec<Vec<f64>> = (0..size)
            .map(|_| (0..4).map(|_| rng.random_range(-0.5..0.5)).collect())
            .collect();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, size), &states, |b, s| {
                b.iter(|| apply_batch_with(black_box(&map), black_box(s), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_gradients(c: &mut Criterion) {
    let ode = parse_ode(SIR).unwrap();
    let rk = Rk4::new(&ode);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trajectories: Vec<_> = (0..64)
        .map(|_| {
            let i = rng.random_range(0.01..0.2);
            rk.trajectory(&[1.0 - i, i, 0.0], 0.1, 100, 1).unwrap()
        })
        .collect();
    let names = ode.variable_names().to_vec();
    let data = TimeSeriesDataset::from_trajectories(names, &trajectories).unwrap();
    let map = build_map(&ode, 0.1, &BuilderConfig::new(2)).unwrap();
    let mut group = c.benchmark_group("loss_and_grad");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::new(name, "64x100"), |b| {
            b.iter(|| loss_and_grad_with(black_box(&map), black_box(&data), exec, DEFAULT_GUARD).unwrap())
        });
    }
    group.finish();
}

fn bench_fd_probes(c: &mut Criterion) {
    let ode = parse_ode(HENON_HEILES).unwrap();
    let map = build_map(&ode, 0.1, &BuilderConfig::new(3)).unwrap();
    let mut group = c.benchmark_group("interpret_fd_probes");
    group.sample_size(10);
    for (name, execution) in modes() {
        let cfg = InterpretConfig {
            max_iterations: 1,
            execution,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::new(name, "henon_heiles"), |b| {
            b.iter(|| map_to_ode(black_box(&map), 2, None, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_apply_batch, bench_gradients, bench_fd_probes);
criterion_main!(benches);

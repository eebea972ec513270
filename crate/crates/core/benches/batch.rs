//! Sequential vs parallel execution of the two data-parallel hot spots:
//! whole-seed batches and the per-step power flows of one truth run.
//! Build with `--no-default-features` to see the rayon-free fallback.

use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iges_core::batch::run_batch;
use iges_core::estimator::EstimationMode;
use iges_core::exec::Execution;
use iges_core::pipeline::Experiment;
use iges_core::scenario::solve_flows;

fn experiment(steps: usize) -> Experiment {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/base.toml");
    let mut exp = Experiment::from_config_file(&path).expect("bundled fixture");
    exp.config.scenario.steps = steps;
    Experiment::prepare(exp.config).expect("bundled fixture")
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn seed_batches(c: &mut Criterion) {
    let exp = experiment(24);
    let settings = exp.config.estimator.settings();
    let seeds: Vec<u64> = (1..=4).collect();
    let mut group = c.benchmark_group("seed_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, seeds.len()), &exec, |b, &exec| {
            b.iter(|| run_batch(&exp, black_box(&seeds), &[EstimationMode::Integrated], &settings, exec).unwrap())
        });
    }
    group.finish();
}

fn power_flows(c: &mut Criterion) {
    let exp = experiment(144);
    let sim = exp.simulate_with(1, Execution::Sequential).unwrap();
    let p = &exp.problem;
    let mut group = c.benchmark_group("power_flows");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, sim.truth.schedules.len()), &exec, |b, &exec| {
            b.iter(|| solve_flows(&p.model, &p.ybus, black_box(&sim.truth.schedules), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, seed_batches, power_flows);
criterion_main!(benches);

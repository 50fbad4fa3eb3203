use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::SeedableRng;
use vhg_core::battery::BatteryModel;
use vhg_core::data_io::Config;
use vhg_core::engine::{run_sweep, run_sweep_sequential, PersistencePredictor, RunInputs, Scenario, SweepGrid};
use vhg_core::optimizer::{solve_window, SolverConfig};
use vhg_core::parallel;
use vhg_core::verify::random_oracle_window;

fn sweep(c: &mut Criterion) {
    let mut cfg = Config::default();
    cfg.simulation.hours_count = 24 * 7;
    let inputs = RunInputs::from_config(&cfg).unwrap();
    let base = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    let grid = SweepGrid {
        gammas: vec![0.0, 1.0],
        capacities_kwh: vec![41.0, 82.0],
        load_multipliers: vec![1.0],
    };
    let mut g = c.benchmark_group("sweep_week");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| run_sweep(black_box(&base), &PersistencePredictor, &grid).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| run_sweep_sequential(black_box(&base), &PersistencePredictor, &grid).unwrap())
    });
    g.finish();
}

fn windows(c: &mut Criterion) {
    let battery = BatteryModel::reference();
    let solver = SolverConfig::default();
    let mut g = c.benchmark_group("solve_windows");
    g.sample_size(10);
    for n in [16, 64] {
        let mut rng = StdRng::seed_from_u64(11);
        let batch: Vec<_> = (0..n)
            .map(|_| random_oracle_window(&mut rng, &battery, 12, 0.5))
            .collect();
        let solve = |w: &_| solve_window(w, &solver).map(|(_, r)| r.objective_value).unwrap();
        g.bench_with_input(BenchmarkId::new("parallel", n), &batch, |b, batch| {
            b.iter(|| parallel::map(batch, solve))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &batch, |b, batch| {
            b.iter(|| parallel::map_sequential(batch, solve))
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, windows);
criterion_main!(benches);

//! Sequential vs rayon execution of the two hot loops: the heat stencil and
//! batch trajectory sampling.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use heatplan::eval::KernelSetup;
use heatplan::grid::{generate_scenario, MapGenConfig};
use heatplan::heat::{HeatField, HeatSolver, SolverParams};
use heatplan::kernel::KernelSchedule;
use heatplan::par::Exec;
use heatplan::sampler::{initial_state, sample_trajectory, SamplerConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn heat(c: &mut Criterion) {
    let s = generate_scenario(&MapGenConfig::default(), 7).unwrap();
    let cell = s.goals[0].cell;
    let field = HeatField::delta(&s.map, cell, 1.0).unwrap();
    let mut g = c.benchmark_group("heat_evolve_1000_steps");
    for (name, exec) in MODES {
        let solver = HeatSolver::new(&s.map, &SolverParams::default()).unwrap().with_exec(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solver.evolve(black_box(&field), 1000).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let s = generate_scenario(&MapGenConfig::default(), 7).unwrap();
    let stack = KernelSetup::default().score_stack(&s).unwrap();
    let schedule = KernelSchedule::default();
    let cfg = SamplerConfig::default();
    let mut g = c.benchmark_group("sample_64_trajectories");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map_range(64, |i| {
                    let seed = i as u64;
                    sample_trajectory(&s, &stack, initial_state(&s, seed), &schedule, &cfg, seed)
                        .unwrap()
                        .final_state()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, heat, sampling);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use targetcost::oracle::{dp_g_profile, level_grid, TieRule};
use targetcost::sim::{mc_path_costs, McConfig, OptimalGain};
use targetcost::{Execution, Params, ShootConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn monte_carlo(c: &mut Criterion) {
    let curve = targetcost::gsolver::shoot_with(2.0, &ShootConfig::default())
        .unwrap()
        .curve;
    let params = Params::new(2.0, 1.0, 0.0, 0.0).unwrap();
    let gain = OptimalGain::new(&curve);
    let mut group = c.benchmark_group("mc_path_costs/2000x500");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = McConfig::new(2000, 500, 7);
        cfg.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mc_path_costs(&gain, &params, &cfg).unwrap())
        });
    }
    group.finish();
}

fn lattice_profile(c: &mut Criterion) {
    let levels = level_grid(0.1, 0.9, 9);
    let mut group = c.benchmark_group("dp_g_profile/n2000");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| dp_g_profile(2000, 2.0, &levels, TieRule::Conservative, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, lattice_profile);
criterion_main!(benches);

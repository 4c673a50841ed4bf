use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qgcc_core::analysis::{analyze_popov_with, default_theta_grid, Settings};
use qgcc_core::linalg;
use qgcc_core::oracle::verify_bound_with;
use qgcc_core::parallel::Execution;
use qgcc_core::qmodel::{dpa_fixture, CostSpec, UncertaintyClass};

fn modes() -> Vec<(&'static str, Execution)> {
    let mut v = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Execution::Parallel));
    }
    v
}

fn verification(c: &mut Criterion) {
    let fx = dpa_fixture(6.0).unwrap();
    let cost = CostSpec::identity(1, 0.1).unwrap();
    let mut group = c.benchmark_group("verify_bound_2000");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| verify_bound_with(exec, &fx.system, Some(&fx.k_example), &cost, 10.0, 2000, 42))
        });
    }
    group.finish();
}

fn theta_grid(c: &mut Criterion) {
    let fx = dpa_fixture(4.5).unwrap();
    let sys = fx.system_for(UncertaintyClass::PositiveBound);
    let r = linalg::eye(2);
    let grid = default_theta_grid();
    let mut group = c.benchmark_group("popov_analysis_grid");
    group.sample_size(10);
    for (name, exec) in modes() {
        let settings = Settings {
            execution: exec,
            ..Settings::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &settings, |b, s| {
            b.iter(|| analyze_popov_with(&sys, &r, &grid, s).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, verification, theta_grid);
criterion_main!(benches);

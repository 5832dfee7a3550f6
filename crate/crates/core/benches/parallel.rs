use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use macroent::observables::{build_fluctuation_matrix_with, estimate_index_p_with};
use macroent::par::Exec;
use macroent::qindex::{max_double_commutator_pure_with, OptimizerSettings};
use macroent::qstate::{make_state, Family, FamilySpec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fluctuation_matrix(c: &mut Criterion) {
    let mut g = c.benchmark_group("fluctuation_matrix");
    for n in [10, 12] {
        let psi = make_state(&Family::Random.into(), n, Some(1)).unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &psi, |b, psi| {
                b.iter(|| build_fluctuation_matrix_with(black_box(psi), exec))
            });
        }
    }
    g.finish();
}

fn optimizer(c: &mut Criterion) {
    let mut g = c.benchmark_group("double_commutator_optimizer");
    g.sample_size(10);
    let settings = OptimizerSettings { starts: 16, max_iters: 200, ..OptimizerSettings::default() };
    let psi = make_state(&FamilySpec::new(Family::Random), 8, Some(3)).unwrap();
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| max_double_commutator_pure_with(black_box(&psi), &settings, 7, exec)));
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("index_p_sweep");
    g.sample_size(10);
    let grid = [6, 8, 10, 12];
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| estimate_index_p_with(&Family::Dicke.into(), black_box(&grid), None, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, fluctuation_matrix, optimizer, sweep);
criterion_main!(benches);

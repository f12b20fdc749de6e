use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rbsde_bench::{corridor, counterexample, one_mark};
use rbsde_core::penalization::{default_ladder, sweep};
use rbsde_core::reflected_one::stopping_payoff;
use rbsde_core::{build_tree, picard_snell_solve, picard_solve, snell, solve_double_obstacle, solve_reflected_one, FixpointOptions, Obstacles};

fn tree_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_tree");
    for steps in [4, 6, 8] {
        g.bench_with_input(BenchmarkId::from_parameter(steps), &steps, |b, &n| b.iter(|| build_tree(black_box(n), one_mark()).unwrap()));
    }
    g.finish();
}

fn one_barrier(c: &mut Criterion) {
    let (tree, problem) = counterexample(8);
    c.bench_function("reflected_one/N=8", |b| b.iter(|| solve_reflected_one(&tree, black_box(&problem)).unwrap()));
    let (eta, _) = stopping_payoff(&tree, &problem).unwrap();
    c.bench_function("snell/N=8", |b| b.iter(|| snell(&tree, black_box(&eta))));
    let (tree6, problem6) = counterexample(6);
    let ladder = default_ladder();
    c.bench_function("penalize_sweep/N=6", |b| b.iter(|| sweep(&tree6, &problem6, &ladder, 6).unwrap()));
}

fn two_barriers(c: &mut Criterion) {
    let (tree, problem) = corridor(6);
    c.bench_function("double_obstacle/N=6", |b| b.iter(|| solve_double_obstacle(&tree, black_box(&problem)).unwrap()));
    c.bench_function("picard_snell/N=6", |b| b.iter(|| picard_snell_solve(&tree, black_box(&problem), None, 1e-12, 10_000).unwrap()));
    let driver = problem.driver.clone().with_linear(-0.3, 0.2, 0.1);
    let obstacles = Obstacles::Both { lower: problem.lower.clone(), upper: problem.upper.clone() };
    let opts = FixpointOptions::default();
    c.bench_function("picard_solve/N=6", |b| b.iter(|| picard_solve(&tree, &driver, &problem.terminal, &obstacles, &opts).unwrap()));
}

criterion_group!(benches, tree_build, one_barrier, two_barriers);
criterion_main!(benches);

//! Benchmark fixtures.

use rbsde_core::corpus;
use rbsde_core::{build_tree, Adapted, Driver, EvaluatedBarrier, MarkSet, OneBarrierProblem, ScenarioTree, TwoBarrierProblem};

pub fn one_mark() -> MarkSet {
    MarkSet::from_pairs(&[(1.0, 1.0)]).expect("valid mark")
}

pub fn counterexample(steps: usize) -> (ScenarioTree, OneBarrierProblem) {
    corpus::counterexample(steps, one_mark()).expect("even step count")
}

/// Brownian corridor `w - 1 <= Y <= w + 1` with `xi = 0` clamped into it.
pub fn corridor(steps: usize) -> (ScenarioTree, TwoBarrierProblem) {
    let tree = build_tree(steps, one_mark()).expect("feasible intensity");
    let lower = Adapted::from_fn(&tree, |n| tree.w(n) - 1.0);
    let upper = lower.map(|l| l + 2.0);
    let terminal = lower.terminal().iter().map(|l| 0.0f64.clamp(*l, l + 2.0)).collect();
    let problem = TwoBarrierProblem {
        driver: Driver::zero(&tree),
        terminal,
        lower: EvaluatedBarrier::continuous(lower),
        upper: EvaluatedBarrier::continuous(upper),
    };
    (tree, problem)
}

//! Problem generators: the discontinuous-barrier instance and seeded random
//! problems used by tests, benchmarks and the acceptance suite.

use rand::Rng;

use crate::error::Result;
use crate::process_model::{
    eval_barrier, eval_terminal, Adapted, BarrierSpec, Driver, DriverSpec, EvaluatedBarrier, Expr, LeftValues,
    OneBarrierProblem, Piecewise, TwoBarrierProblem,
};
use crate::reflected_one::solve_reflected_one;
use crate::scenario_tree::{build_tree, MarkSet, NodeId, ScenarioTree};

/// `xi = 1/2`, `f = 0`, `S = 1[t < 1/2]`: the barrier drops at `t = 1/2` while
/// the solution sits on it, so `K` has a predictable jump of size `1/2`.
pub fn counterexample_specs() -> (Expr, DriverSpec, BarrierSpec) {
    (Expr::Const(0.5), DriverSpec::zero(), BarrierSpec::deterministic(Piecewise::step(1.0, 0.5, 0.0)))
}

/// The instance above on a tree with `steps` steps (must be even).
pub fn counterexample(steps: usize, marks: MarkSet) -> Result<(ScenarioTree, OneBarrierProblem)> {
    let tree = build_tree(steps, marks)?;
    let (terminal, driver, barrier) = counterexample_specs();
    let problem = OneBarrierProblem {
        driver: driver.bind(&tree)?,
        terminal: eval_terminal(&terminal, &tree)?,
        barrier: eval_barrier(&barrier, &tree)?,
    };
    Ok((tree, problem))
}

/// Tree with `1..=max_steps` steps and `0..=max_marks` marks.
pub fn random_tree(rng: &mut impl Rng, max_steps: usize, max_marks: usize) -> ScenarioTree {
    let steps = rng.gen_range(1..=max_steps);
    let m = rng.gen_range(0..=max_marks);
    let dt = 1.0 / steps as f64;
    // total jump probability per step at most 0.9
    let cap = 0.9 / (dt * m.max(1) as f64);
    let pairs: Vec<(f64, f64)> = (0..m).map(|i| (0.5 + i as f64, rng.gen_range(0.05..=cap.min(3.0)))).collect();
    build_tree(steps, MarkSet::from_pairs(&pairs).expect("distinct sizes")).expect("feasible by construction")
}

fn random_grid_driver(rng: &mut impl Rng, tree: &ScenarioTree) -> Driver {
    Driver::from_grid(tree, (0..tree.steps()).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

/// Optional zero-offset declared jump at a random level.
fn random_jump(rng: &mut impl Rng, tree: &ScenarioTree, values: &Adapted) -> Vec<LeftValues> {
    if rng.gen_bool(0.5) {
        let level = rng.gen_range(1..=tree.steps());
        vec![LeftValues { level, values: values.level(level - 1).to_vec() }]
    } else {
        Vec::new()
    }
}

/// Coefficient-free one-barrier problem with a random barrier, `xi >= S_N`,
/// and a barrier that is active somewhere (lifted at the root otherwise).
pub fn random_one_barrier(rng: &mut impl Rng, max_steps: usize, max_marks: usize) -> (ScenarioTree, OneBarrierProblem) {
    let tree = random_tree(rng, max_steps, max_marks);
    let values = Adapted::from_fn(&tree, |_| rng.gen_range(-1.0..1.0));
    let jumps = random_jump(rng, &tree, &values);
    let terminal: Vec<f64> = values.terminal().iter().map(|s| s + rng.gen_range(0.0..0.5)).collect();
    let driver = random_grid_driver(rng, &tree);
    let mut problem = OneBarrierProblem { driver, terminal, barrier: EvaluatedBarrier { values, jumps } };
    let sol = solve_reflected_one(&tree, &problem).expect("valid by construction");
    if sol.k.max_abs() == 0.0 {
        let lifted = sol.y.get(NodeId::ROOT) + rng.gen_range(0.1..0.5);
        problem.barrier.values.set(NodeId::ROOT, lifted);
        for jump in problem.barrier.jumps.iter_mut().filter(|j| j.level == 1) {
            jump.values[0] = lifted;
        }
    }
    (tree, problem)
}

/// Coefficient-free two-barrier problem with `U - L >= margin` everywhere
/// (left values included) and `L_N <= xi <= U_N`.
pub fn random_two_barrier(rng: &mut impl Rng, max_steps: usize, max_marks: usize, margin: f64) -> (ScenarioTree, TwoBarrierProblem) {
    let tree = random_tree(rng, max_steps, max_marks);
    let lower = Adapted::from_fn(&tree, |_| rng.gen_range(-1.0..0.5));
    let upper = Adapted::from_fn(&tree, |node| lower.get(node) + margin + rng.gen_range(0.0..1.0));
    let lower_jumps = random_jump(rng, &tree, &lower);
    let upper_jumps = random_jump(rng, &tree, &upper);
    let terminal: Vec<f64> = lower.terminal().iter().zip(upper.terminal()).map(|(l, u)| rng.gen_range(*l..=*u)).collect();
    let driver = random_grid_driver(rng, &tree);
    let problem = TwoBarrierProblem {
        driver,
        terminal,
        lower: EvaluatedBarrier { values: lower, jumps: lower_jumps },
        upper: EvaluatedBarrier { values: upper, jumps: upper_jumps },
    };
    (tree, problem)
}

/// Lifts a one-barrier problem to two barriers with a far-away upper barrier.
pub fn with_inactive_upper(tree: &ScenarioTree, problem: &OneBarrierProblem, level: f64) -> TwoBarrierProblem {
    TwoBarrierProblem {
        driver: problem.driver.clone(),
        terminal: problem.terminal.clone(),
        lower: problem.barrier.clone(),
        upper: EvaluatedBarrier::constant(tree, level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn counterexample_needs_even_grid() {
        assert!(counterexample(4, MarkSet::empty()).is_ok());
        assert!(counterexample(3, MarkSet::empty()).is_err());
    }

    #[test]
    fn random_problems_are_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (tree, p) = random_one_barrier(&mut rng, 5, 2);
            assert!(p.terminal.iter().zip(p.barrier.values.terminal()).all(|(x, s)| x >= s));
            assert!(solve_reflected_one(&tree, &p).unwrap().k.max_abs() > 0.0);
            let (tree, p) = random_two_barrier(&mut rng, 5, 1, 0.2);
            for (node, l) in p.lower.values.iter() {
                assert!(p.upper.get(node) - l >= 0.2);
            }
            assert_eq!(p.terminal.len(), tree.leaf_count());
        }
    }
}

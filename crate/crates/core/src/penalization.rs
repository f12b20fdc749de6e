//! Penalized equations `f + n (y - S)^-` and their monotone limit.

use serde::Serialize;

use crate::bsde::solve_bsde_penalized;
use crate::error::{Error, Result};
use crate::process_model::{dt_dp_norm, jump_norm, Adapted, OneBarrierProblem, Predictable};
use crate::reflected_one::solve_reflected_one;
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::solution::{accumulate, SolutionQuadruple};

/// Pointwise tolerance for `Y^n <= Y^{n+1}`.
pub const MONOTONE_TOL: f64 = 1e-12;

/// `1, 2, 4, .., 1024`.
pub fn default_ladder() -> Vec<f64> {
    (0..=10).map(|e| f64::from(1u32 << e)).collect()
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    /// Standard solution with the penalized driver; its `K` fields are zero.
    pub solution: SolutionQuadruple,
    /// `K^n_k = sum_{j<k} n (Y^n_j - S_j)^- dt`.
    pub kn: Adapted,
}

pub fn solve_penalized(tree: &ScenarioTree, problem: &OneBarrierProblem, n: f64) -> Result<PenalizedSolution> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::InvalidInput(format!("penalty level {n} must be finite and >= 0")));
    }
    let s = &problem.barrier.values;
    let driver = problem.driver.clone().with_penalty(n);
    let solution = solve_bsde_penalized(tree, &driver, &problem.terminal, Some(s))?;
    let inc = Predictable::from_fn(tree, |node| n * (s.get(node) - solution.y.get(node)).max(0.0) * tree.dt());
    let kn = accumulate(tree, &inc);
    Ok(PenalizedSolution { solution, kn })
}

#[derive(Debug, Clone, Serialize)]
pub struct PenalizationReport {
    pub levels: Vec<f64>,
    pub y_root: Vec<f64>,
    /// `sup |Y^n - Y|` over all nodes.
    pub sup_gaps: Vec<f64>,
    /// `|Z^n - Z|` and `|V^n - V|` in the `dt x dP` norm.
    pub z_gaps: Vec<f64>,
    pub v_gaps: Vec<f64>,
    /// `sup |K^n - K|` over all nodes.
    pub k_gaps: Vec<f64>,
    pub tau_level: usize,
    /// `E[(K^n_tau - K_tau)^2]^{1/2}`.
    pub k_tau_gaps: Vec<f64>,
    /// `sup |Y^n - Y|` over the nodes just before declared barrier jumps.
    pub jump_slot_gaps: Vec<f64>,
    /// Largest `Y^n - Y` seen anywhere (nonpositive up to rounding).
    pub max_excess_over_limit: f64,
    pub limit_root: f64,
    #[serde(skip)]
    pub limit: SolutionQuadruple,
    #[serde(skip)]
    pub penalized: Vec<PenalizedSolution>,
}

/// Runs the ladder `n_list` and compares each entry with the reflected solution.
pub fn sweep(tree: &ScenarioTree, problem: &OneBarrierProblem, n_list: &[f64], tau_level: usize) -> Result<PenalizationReport> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("penalty ladder must be strictly ascending with at least two entries".into()));
    }
    if tau_level > tree.steps() {
        return Err(Error::InvalidInput(format!("stopping level {tau_level} beyond the horizon")));
    }
    let limit = solve_reflected_one(tree, problem)?;
    let penalized = n_list.iter().map(|&n| solve_penalized(tree, problem, n)).collect::<Result<Vec<_>>>()?;

    for (j, pair) in penalized.windows(2).enumerate() {
        let (lo, hi) = (&pair[0].solution.y, &pair[1].solution.y);
        if let Some((node, excess)) = lo.iter().map(|(node, y)| (node, y - hi.get(node))).find(|(_, e)| *e > MONOTONE_TOL) {
            return Err(Error::MonotonicityViolation { entry: j + 1, level: node.level, index: node.index, excess });
        }
    }

    let lambdas = tree.intensities();
    let slots: Vec<NodeId> = problem.barrier.declared_levels().flat_map(|k| tree.nodes(k - 1)).collect();
    let mut report = PenalizationReport {
        levels: n_list.to_vec(),
        y_root: Vec::new(),
        sup_gaps: Vec::new(),
        z_gaps: Vec::new(),
        v_gaps: Vec::new(),
        k_gaps: Vec::new(),
        tau_level,
        k_tau_gaps: Vec::new(),
        jump_slot_gaps: Vec::new(),
        max_excess_over_limit: f64::NEG_INFINITY,
        limit_root: limit.y.get(NodeId::ROOT),
        limit: limit.clone(),
        penalized: Vec::new(),
    };
    for p in &penalized {
        let y = &p.solution.y;
        report.y_root.push(y.get(NodeId::ROOT));
        report.sup_gaps.push(y.max_abs_diff(&limit.y));
        report.z_gaps.push(dt_dp_norm(tree, |n| p.solution.z.get(n) - limit.z.get(n)));
        report.v_gaps.push(dt_dp_norm(tree, |n| {
            let d: Vec<f64> = p.solution.v.get(n).iter().zip(limit.v.get(n)).map(|(a, b)| a - b).collect();
            jump_norm(&d, lambdas)
        }));
        report.k_gaps.push(p.kn.max_abs_diff(&limit.k));
        let sq: Vec<f64> = p.kn.level(tau_level).iter().zip(limit.k.level(tau_level)).map(|(a, b)| (a - b).powi(2)).collect();
        report.k_tau_gaps.push(tree.expect_at(&sq).sqrt());
        report.jump_slot_gaps.push(slots.iter().map(|&n| (y.get(n) - limit.y.get(n)).abs()).fold(0.0, f64::max));
        let excess = y.iter().map(|(n, v)| v - limit.y.get(n)).fold(f64::NEG_INFINITY, f64::max);
        report.max_excess_over_limit = report.max_excess_over_limit.max(excess);
    }
    report.penalized = penalized;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::process_model::{Driver, EvaluatedBarrier};
    use crate::scenario_tree::{build_tree, MarkSet};
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn zero_penalty_is_plain_solve() {
        let (tree, problem) = corpus::counterexample(4, MarkSet::empty()).unwrap();
        let p = solve_penalized(&tree, &problem, 0.0).unwrap();
        assert!(p.solution.y.iter().all(|(_, y)| y == 0.5));
        assert_eq!(p.kn.max_abs(), 0.0);
    }

    #[test]
    fn inactive_barrier_never_penalizes() {
        let tree = build_tree(4, MarkSet::from_pairs(&[(1.0, 0.5)]).unwrap()).unwrap();
        let xi: Vec<f64> = tree.nodes(4).map(|n| tree.w(n)).collect();
        let problem = OneBarrierProblem { driver: Driver::zero(&tree), terminal: xi.clone(), barrier: EvaluatedBarrier::constant(&tree, -10.0) };
        let plain = crate::bsde::solve_bsde(&tree, &problem.driver, &xi).unwrap();
        for n in [1.0, 100.0, 1e6] {
            let p = solve_penalized(&tree, &problem, n).unwrap();
            assert_eq!(p.solution.y, plain.y);
            assert_eq!(p.kn.max_abs(), 0.0);
        }
    }

    #[test]
    fn counterexample_ladder() {
        let (tree, problem) = corpus::counterexample(8, MarkSet::from_pairs(&[(1.0, 1.0)]).unwrap()).unwrap();
        let ladder = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let report = sweep(&tree, &problem, &ladder, 4).unwrap();
        assert!(report.sup_gaps.windows(2).all(|w| w[1] < w[0]));
        // Y^n before the drop solves y = 1/2 + n dt (1 - y) level by level
        let dt = tree.dt();
        for (p, &n) in report.penalized.iter().zip(&ladder) {
            let mut y = 0.5;
            for k in (0..4).rev() {
                y = (y + n * dt) / (1.0 + n * dt);
                assert!((p.solution.y.level(k)[0] - y).abs() < 1e-15);
            }
        }
        assert!(report.z_gaps.iter().chain(&report.v_gaps).all(|g| *g < 1e-12));
        assert!(report.max_excess_over_limit <= 1e-12);
        for (gap, &n) in report.sup_gaps.iter().zip(&ladder) {
            assert!((gap - 0.5 / (1.0 + n * dt)).abs() < 1e-15);
        }
        let big = solve_penalized(&tree, &problem, 1e12).unwrap();
        assert!((big.solution.y.get(NodeId::ROOT) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn counterexample_coarse_grid_gap() {
        let (tree, problem) = corpus::counterexample(2, MarkSet::empty()).unwrap();
        let report = sweep(&tree, &problem, &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0], 1).unwrap();
        assert!(report.sup_gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(*report.sup_gaps.last().unwrap() < 0.05);
    }

    #[test]
    fn constant_problem_has_no_gaps() {
        let tree = build_tree(3, MarkSet::empty()).unwrap();
        let problem = OneBarrierProblem { driver: Driver::zero(&tree), terminal: vec![1.0; 8], barrier: EvaluatedBarrier::constant(&tree, 1.0) };
        let report = sweep(&tree, &problem, &default_ladder(), 3).unwrap();
        assert!(report.sup_gaps.iter().chain(&report.k_gaps).all(|g| *g == 0.0));
    }

    #[test]
    fn bad_ladder() {
        let (tree, problem) = corpus::counterexample(2, MarkSet::empty()).unwrap();
        assert!(sweep(&tree, &problem, &[1.0], 1).is_err());
        assert!(sweep(&tree, &problem, &[2.0, 1.0], 1).is_err());
    }

    #[test]
    fn penalized_value_is_a_stopping_value() {
        // Y^n_0 = max over tau of E[sum_{j<tau} g dt + (S ^ Y^n)_tau 1[tau < N] + xi 1[tau = N]]
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let (tree, problem) = corpus::random_one_barrier(&mut rng, 4, 1);
            let p = solve_penalized(&tree, &problem, 3.0).unwrap();
            let capped = OneBarrierProblem {
                barrier: EvaluatedBarrier::continuous(problem.barrier.values.zip_with(&p.solution.y, f64::min)),
                ..problem.clone()
            };
            let (eta, _) = crate::reflected_one::stopping_payoff(&tree, &capped).unwrap();
            let bf = crate::snell::brute_force_value(&tree, &eta, NodeId::ROOT).unwrap();
            assert!((bf - p.solution.y.get(NodeId::ROOT)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn monotone_dominated_and_flux(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (tree, problem) = corpus::random_one_barrier(&mut rng, 4, 1);
            let report = sweep(&tree, &problem, &default_ladder(), tree.steps()).unwrap();
            prop_assert!(report.max_excess_over_limit <= MONOTONE_TOL);
            prop_assert!(report.sup_gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            for (p, &n) in report.penalized.iter().zip(&report.levels) {
                let y = &p.solution.y;
                for k in 0..tree.steps() {
                    for node in tree.nodes(k) {
                        let mean = tree.conditional_expectation(y.level(k + 1), node);
                        let flux = y.get(node) - mean - problem.driver.base_at(node) * tree.dt();
                        let pen = n * (problem.barrier.get(node) - y.get(node)).max(0.0) * tree.dt();
                        // y carries one rounding, amplified by n dt in the penalty term
                        prop_assert!((flux - pen).abs() < 1e-13 * (1.0 + n * tree.dt()));
                    }
                }
            }
        }
    }
}

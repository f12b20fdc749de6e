//! Reflected equation with one lower barrier.
//!
//! Backward induction `Y_k = max(S_k, c_k)` where `c_k` is the implicit
//! unreflected candidate. The compensator increment assigned at a node is the
//! part of the step not produced by the driver:
//! `K_{k+1} - K_k = Y_k - E[Y_{k+1} | F_k] - f(t_k, Y_k, Z_k, V_k) dt`,
//! which equals `(1 - a dt)(Y_k - c_k)`.

use crate::bsde::backward_sweep;
use crate::error::{Error, Result};
use crate::process_model::{path_integral, Adapted, Driver, OneBarrierProblem, Predictable};
use crate::scenario_tree::ScenarioTree;
use crate::snell::snell;
use crate::solution::{accumulate, split_compensator, Side, SolutionQuadruple};

pub fn solve_reflected_one(tree: &ScenarioTree, problem: &OneBarrierProblem) -> Result<SolutionQuadruple> {
    let s = &problem.barrier.values;
    if let Some((i, (&xi, &b))) = problem.terminal.iter().zip(s.terminal()).enumerate().find(|(_, (x, b))| x < b) {
        return Err(Error::TerminalBelowBarrier { index: i, xi, barrier: b });
    }
    let driver = problem.driver.without_penalty();
    let mut candidates = Predictable::zeros(tree);
    let sweep = backward_sweep(tree, &driver, &problem.terminal, None, |node, c| {
        candidates.set(node, c);
        c.max(s.get(node))
    })?;
    let inc = Predictable::from_fn(tree, |node| {
        if candidates.get(node) >= s.get(node) {
            return 0.0;
        }
        let y = sweep.y.get(node);
        let net = y - sweep.mean.get(node) - driver.eval(node, y, sweep.z.get(node), sweep.v.get(node), None) * tree.dt();
        net.max(0.0)
    });
    let k = accumulate(tree, &inc);
    let (k_c, k_d) = split_compensator(tree, &sweep.y, &inc, &problem.barrier, Side::Lower);
    Ok(SolutionQuadruple { y: sweep.y, z: sweep.z, v: sweep.v, k, k_c, k_d, residual: sweep.residual })
}

/// Optimal stopping payoff `sum_{j<k} g_j dt + S_k` for `k < N` and
/// `sum_{j<N} g_j dt + xi` at `N`, with the running integral.
pub fn stopping_payoff(tree: &ScenarioTree, problem: &OneBarrierProblem) -> Result<(Adapted, Adapted)> {
    let driver = &problem.driver;
    if !driver.is_coefficient_free() {
        return Err(Error::DriverNotCoefficientFree);
    }
    let integral = path_integral(tree, |node| driver.base_at(node));
    let n = tree.steps();
    let mut eta = integral.zip_with(&problem.barrier.values, |i, s| i + s);
    for (e, (i, xi)) in eta.level_mut(n).iter_mut().zip(integral.level(n).iter().zip(&problem.terminal)) {
        *e = i + xi;
    }
    Ok((eta, integral))
}

/// `Y` obtained from the Snell envelope: `Y_k = R_k - sum_{j<k} g_j dt`.
pub fn solve_via_snell(tree: &ScenarioTree, problem: &OneBarrierProblem) -> Result<Adapted> {
    let (eta, integral) = stopping_payoff(tree, problem)?;
    Ok(snell(tree, &eta).envelope.zip_with(&integral, |r, i| r - i))
}

/// `max |Y_k + sum_{j<k} g_j dt - R_k|` over all nodes, `R` the Snell envelope
/// of the stopping payoff.
pub fn snell_representation_check(tree: &ScenarioTree, solution: &SolutionQuadruple, problem: &OneBarrierProblem) -> Result<f64> {
    let y = solve_via_snell(tree, problem)?;
    Ok(y.max_abs_diff(&solution.y))
}

/// Convenience: bind a coefficient-free driver from per-level values.
pub fn grid_driver(tree: &ScenarioTree, g: impl Fn(usize) -> f64) -> Driver {
    Driver::from_grid(tree, (0..tree.steps()).map(g).collect())
}

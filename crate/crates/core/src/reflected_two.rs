//! Reflected equation between a lower barrier `L` and an upper barrier `U`.
//!
//! Two solvers: direct induction `Y_k = median(L_k, c_k, U_k)`, and for
//! coefficient-free drivers the construction through the pair of Snell
//! envelopes `N^+ = R(N^- + L~)`, `N^- = R(N^+ - U~)` with
//! `Y = N^+ - N^- + E[xi + sum_{j>=k} g_j dt | F_k]`.

use serde::Serialize;

use crate::bsde::{backward_sweep, project_zv};
use crate::error::{Error, Result};
use crate::process_model::{Adapted, Predictable, PredictableMarks, TwoBarrierProblem};
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::snell::snell;
use crate::solution::{accumulate, split_compensator, Side, SolutionQuintuple};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Tolerance of the witness and iterate-monotonicity checks.
pub const CHECK_TOL: f64 = 1e-12;

/// Two nonnegative supermartingales with `L <= h - h' <= U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MokobodskiWitness {
    pub h: Adapted,
    pub h_prime: Adapted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MokobodskiCheck {
    pub passed: bool,
    /// First violated inequality and where, if any.
    pub violation: Option<String>,
    pub node: Option<NodeId>,
}

pub fn check_mokobodski(tree: &ScenarioTree, witness: &MokobodskiWitness, lower: &Adapted, upper: &Adapted) -> MokobodskiCheck {
    let fail = |what: String, node: NodeId| MokobodskiCheck { passed: false, violation: Some(what), node: Some(node) };
    for (name, p) in [("h", &witness.h), ("h'", &witness.h_prime)] {
        if let Some((node, v)) = p.iter().find(|(_, v)| *v < -CHECK_TOL) {
            return fail(format!("{name} = {v} < 0"), node);
        }
        for k in 0..tree.steps() {
            let means = tree.expect_level(p.level(k + 1));
            if let Some((i, (m, v))) = means.iter().zip(p.level(k)).enumerate().find(|(_, (m, v))| **m > **v + CHECK_TOL) {
                return fail(format!("E[{name}_next] = {m} > {name} = {v}"), NodeId::new(k, i));
            }
        }
    }
    for (node, l) in lower.iter() {
        let d = witness.h.get(node) - witness.h_prime.get(node);
        let u = upper.get(node);
        if d < l - CHECK_TOL || d > u + CHECK_TOL {
            return fail(format!("h - h' = {d} outside [{l}, {u}]"), node);
        }
    }
    MokobodskiCheck { passed: true, violation: None, node: None }
}

/// Witness built from `Z = (L + U) / 2` before the horizon and `Z = xi` at it:
/// `h' ` is the smallest deterministic nonincreasing process keeping
/// `h = Z + h'` nonnegative and a supermartingale.
pub fn default_witness(tree: &ScenarioTree, problem: &TwoBarrierProblem) -> MokobodskiWitness {
    let n = tree.steps();
    let mut z = problem.lower.values.zip_with(&problem.upper.values, |l, u| 0.5 * (l + u));
    *z.level_mut(n) = problem.terminal.clone();
    let neg_max = |k: usize| z.level(k).iter().fold(0.0f64, |m, v| m.max(-v));
    let mut hp = vec![0.0; n + 1];
    hp[n] = neg_max(n);
    for k in (0..n).rev() {
        let means = tree.expect_level(z.level(k + 1));
        let drift = means.iter().zip(z.level(k)).fold(0.0f64, |m, (e, v)| m.max(e - v));
        hp[k] = (hp[k + 1] + drift).max(neg_max(k));
    }
    let h_prime = Adapted::from_fn(tree, |node| hp[node.level]);
    let h = z.zip_with(&h_prime, |a, b| a + b);
    MokobodskiWitness { h, h_prime }
}

fn validate(tree: &ScenarioTree, problem: &TwoBarrierProblem) -> Result<()> {
    let n = tree.steps();
    let (lo, up) = (&problem.lower.values, &problem.upper.values);
    if problem.terminal.len() != tree.leaf_count() {
        return Err(Error::ShapeMismatch("terminal does not match the leaves".into()));
    }
    if let Some(index) = problem
        .terminal
        .iter()
        .zip(lo.level(n).iter().zip(up.level(n)))
        .position(|(x, (l, u))| x < l || x > u)
    {
        return Err(Error::TerminalOutsideBarriers { index });
    }
    for k in 0..n {
        if let Some(index) = lo.level(k).iter().zip(up.level(k)).position(|(l, u)| l >= u) {
            return Err(Error::BarriersTouch { level: k, index });
        }
    }
    let mut levels: Vec<usize> = problem.lower.declared_levels().chain(problem.upper.declared_levels()).collect();
    levels.sort_unstable();
    levels.dedup();
    for k in levels {
        let (l, u) = (problem.lower.left_or_previous(k), problem.upper.left_or_previous(k));
        if let Some(index) = l.iter().zip(u).position(|(l, u)| l >= u) {
            return Err(Error::BarriersTouch { level: k - 1, index });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    tree: &ScenarioTree,
    problem: &TwoBarrierProblem,
    y: Adapted,
    z: Predictable,
    v: PredictableMarks,
    residual: Predictable,
    inc_plus: &Predictable,
    inc_minus: &Predictable,
) -> SolutionQuintuple {
    let (k_plus_c, k_plus_d) = split_compensator(tree, &y, inc_plus, &problem.lower, Side::Lower);
    let (k_minus_c, k_minus_d) = split_compensator(tree, &y, inc_minus, &problem.upper, Side::Upper);
    SolutionQuintuple {
        k_plus: accumulate(tree, inc_plus),
        k_minus: accumulate(tree, inc_minus),
        y,
        z,
        v,
        k_plus_c,
        k_plus_d,
        k_minus_c,
        k_minus_d,
        residual,
    }
}

/// Direct backward induction with median truncation.
pub fn solve_double_obstacle(tree: &ScenarioTree, problem: &TwoBarrierProblem) -> Result<SolutionQuintuple> {
    validate(tree, problem)?;
    let (lo, up) = (&problem.lower.values, &problem.upper.values);
    let driver = problem.driver.without_penalty();
    let mut candidates = Predictable::zeros(tree);
    let sweep = backward_sweep(tree, &driver, &problem.terminal, None, |node, c| {
        candidates.set(node, c);
        c.max(lo.get(node)).min(up.get(node))
    })?;
    let net = sweep.net_increments(tree, &driver, None);
    let inc_plus = Predictable::from_fn(tree, |n| if candidates.get(n) < lo.get(n) { net.get(n).max(0.0) } else { 0.0 });
    let inc_minus = Predictable::from_fn(tree, |n| if candidates.get(n) > up.get(n) { (-net.get(n)).max(0.0) } else { 0.0 });
    Ok(assemble(tree, problem, sweep.y, sweep.z, sweep.v, sweep.residual, &inc_plus, &inc_minus))
}

/// Statistics of one `N^{+-,n} -> N^{+-,n+1}` update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardIteration {
    pub plus_change: f64,
    pub minus_change: f64,
    /// `min (N^{n+1} - N^n)` over both sequences and all nodes.
    pub min_step: f64,
    /// `min N^{n+1}` over both sequences.
    pub min_value: f64,
    /// `max (N^{+,n+1} - H, N^{-,n+1} - Theta)`.
    pub max_excess: f64,
    /// First node breaking `0 <= N^n <= N^{n+1} <= bound`, with the size of the breach.
    pub first_violation: Option<(NodeId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardTrace {
    pub iterations: Vec<PicardIteration>,
    pub witness: MokobodskiWitness,
    /// `H` and `Theta`, the bounds of `N^+` and `N^-`.
    pub bound_plus: Adapted,
    pub bound_minus: Adapted,
}

/// `E[sum_{j>=k} phi(j) dt | F_k]` for a per-node integrand.
fn future_integral(tree: &ScenarioTree, phi: impl Fn(NodeId) -> f64) -> Adapted {
    let mut out = Adapted::zeros(tree);
    for k in (0..tree.steps()).rev() {
        let means = tree.expect_level(out.level(k + 1));
        for (i, m) in means.into_iter().enumerate() {
            out.set(NodeId::new(k, i), m + phi(NodeId::new(k, i)) * tree.dt());
        }
    }
    out
}

/// Existence construction through the pair of Snell envelopes. Requires a
/// coefficient-free driver and a passing Mokobodski witness (the built-in one
/// when `witness` is `None`).
pub fn picard_snell_solve(
    tree: &ScenarioTree,
    problem: &TwoBarrierProblem,
    witness: Option<&MokobodskiWitness>,
    tol: f64,
    max_iter: usize,
) -> Result<(SolutionQuintuple, PicardTrace)> {
    if !problem.driver.is_coefficient_free() {
        return Err(Error::DriverNotCoefficientFree);
    }
    validate(tree, problem)?;
    let n = tree.steps();
    let witness = witness.cloned().unwrap_or_else(|| default_witness(tree, problem));
    let check = check_mokobodski(tree, &witness, &problem.lower.values, &problem.upper.values);
    if !check.passed {
        return Err(Error::MokobodskiFailed(format!("{} at {:?}", check.violation.unwrap_or_default(), check.node)));
    }

    let g = |node: NodeId| problem.driver.base_at(node);
    let mut x = future_integral(tree, g);
    let xi_part = crate::process_model::conditional_expectations(tree, &problem.terminal);
    x = x.zip_with(&xi_part, |a, b| a + b);
    let tilde = |b: &Adapted| Adapted::from_fn(tree, |node| if node.level < n { b.get(node) - x.get(node) } else { 0.0 });
    let l_tilde = tilde(&problem.lower.values);
    let u_tilde = tilde(&problem.upper.values);

    let xi_neg = crate::process_model::conditional_expectations(tree, &problem.terminal.iter().map(|v| (-v).max(0.0)).collect::<Vec<_>>());
    let xi_pos = crate::process_model::conditional_expectations(tree, &problem.terminal.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
    let g_neg = future_integral(tree, |node| (-g(node)).max(0.0));
    let g_pos = future_integral(tree, |node| g(node).max(0.0));
    let bound = |h: &Adapted, xi: &Adapted, gi: &Adapted| {
        Adapted::from_fn(tree, |node| if node.level < n { h.get(node) + xi.get(node) } else { 0.0 } + gi.get(node))
    };
    let bound_plus = bound(&witness.h, &xi_neg, &g_neg);
    let bound_minus = bound(&witness.h_prime, &xi_pos, &g_pos);

    let mut plus = Adapted::zeros(tree);
    let mut minus = Adapted::zeros(tree);
    let mut iterations = Vec::new();
    let (plus_res, minus_res) = loop {
        if iterations.len() >= max_iter {
            return Err(Error::MaxIterExceeded(max_iter));
        }
        let next_plus = snell(tree, &minus.zip_with(&l_tilde, |a, b| a + b));
        let next_minus = snell(tree, &plus.zip_with(&u_tilde, |a, b| a - b));
        let stats = iteration_stats([(&plus, &next_plus.envelope, &bound_plus), (&minus, &next_minus.envelope, &bound_minus)]);
        let done = stats.plus_change < tol && stats.minus_change < tol;
        iterations.push(stats);
        plus = next_plus.envelope.clone();
        minus = next_minus.envelope.clone();
        if done {
            break (next_plus, next_minus);
        }
    };

    let y = Adapted::from_fn(tree, |node| plus.get(node) - minus.get(node) + x.get(node));
    let b = tree.branching();
    let mut z = Predictable::zeros(tree);
    let mut v = PredictableMarks::zeros(tree);
    let mut residual = Predictable::zeros(tree);
    for k in 0..n {
        for node in tree.nodes(k) {
            let p = project_zv(tree, &y.level(k + 1)[node.index * b..(node.index + 1) * b]);
            z.set(node, p.z);
            v.get_mut(node).copy_from_slice(&p.v);
            residual.set(node, p.residual);
        }
    }
    let sol = assemble(tree, problem, y, z, v, residual, &plus_res.increments, &minus_res.increments);
    Ok((sol, PicardTrace { iterations, witness, bound_plus, bound_minus }))
}

fn iteration_stats(pairs: [(&Adapted, &Adapted, &Adapted); 2]) -> PicardIteration {
    let mut stats = PicardIteration {
        plus_change: pairs[0].1.max_abs_diff(pairs[0].0),
        minus_change: pairs[1].1.max_abs_diff(pairs[1].0),
        min_step: f64::INFINITY,
        min_value: f64::INFINITY,
        max_excess: f64::NEG_INFINITY,
        first_violation: None,
    };
    for (old, new, bound) in pairs {
        for (node, v) in new.iter() {
            let step = v - old.get(node);
            let excess = v - bound.get(node);
            stats.min_step = stats.min_step.min(step);
            stats.min_value = stats.min_value.min(v);
            stats.max_excess = stats.max_excess.max(excess);
            let breach = (-step).max(-v).max(excess);
            if breach > CHECK_TOL && stats.first_violation.is_none() {
                stats.first_violation = Some((node, breach));
            }
        }
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneIterateReport {
    pub iterations: usize,
    pub min_step: f64,
    pub min_value: f64,
    pub max_excess: f64,
}

/// Verifies `0 <= N^{+-,n} <= N^{+-,n+1} <= H / Theta` on every recorded iteration.
pub fn monotone_iterate_check(trace: &PicardTrace) -> Result<MonotoneIterateReport> {
    for (j, it) in trace.iterations.iter().enumerate() {
        if let Some((node, excess)) = it.first_violation {
            return Err(Error::MonotonicityViolation { entry: j + 1, level: node.level, index: node.index, excess });
        }
    }
    let fold = |f: fn(&PicardIteration) -> f64, init: f64, op: fn(f64, f64) -> f64| trace.iterations.iter().map(f).fold(init, op);
    Ok(MonotoneIterateReport {
        iterations: trace.iterations.len(),
        min_step: fold(|i| i.min_step, f64::INFINITY, f64::min),
        min_value: fold(|i| i.min_value, f64::INFINITY, f64::min),
        max_excess: fold(|i| i.max_excess, f64::NEG_INFINITY, f64::max),
    })
}

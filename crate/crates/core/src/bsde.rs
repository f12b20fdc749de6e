//! Unreflected backward steps on the tree.
//!
//! `Y_k` solves `y = E[Y_{k+1} | F_k] + f(t_k, y, Z_k, V_k) dt` implicitly in
//! `y`, with `(Z_k, V_k)` the orthogonal projection of `Y_{k+1}` onto the span
//! of the step's noise increments `{dB, mu~_1, .., mu~_m}`.

use crate::error::{Error, Result};
use crate::process_model::{Adapted, Driver, Predictable, PredictableMarks};
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::solution::SolutionQuadruple;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `E[Y_next | node]`.
    pub mean: f64,
    pub z: f64,
    pub v: Vec<f64>,
    /// `L^2(node)` norm of the unexplained part of `Y_next`.
    pub residual: f64,
}

/// Projects the children values `next` of one node onto `{1, dB, mu~_i}`.
///
/// `z = E[Y dB] / dt`. The compensated jumps of different marks are
/// correlated, `E[mu~_i mu~_j] = lambda_i dt 1[i = j] - lambda_i lambda_j dt^2`,
/// and the Gram matrix is inverted in closed form:
/// `v_i = E[Y mu~_i] / (lambda_i dt) + sum_j E[Y mu~_j] / (1 - dt sum_j lambda_j)`.
pub fn project_zv(tree: &ScenarioTree, next: &[f64]) -> Projection {
    let probs = tree.child_probs();
    let dw = tree.child_increments();
    let dt = tree.dt();
    let lambdas = tree.intensities();
    let m = lambdas.len();

    let mean = tree.expect_children(next);
    let mut z = 0.0;
    let mut cross = vec![0.0; m];
    for (c, (&y, &p)) in next.iter().zip(probs).enumerate() {
        let centered = p * (y - mean);
        z += centered * dw[c];
        for (acc, mu) in cross.iter_mut().zip(tree.branch_compensated(c)) {
            *acc += centered * mu;
        }
    }
    z /= dt;
    let jump_mass: f64 = dt * lambdas.iter().sum::<f64>();
    let shared = cross.iter().sum::<f64>() / (1.0 - jump_mass);
    let v: Vec<f64> = cross.iter().zip(lambdas).map(|(c, l)| c / (l * dt) + shared).collect();

    let residual = next
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(c, (&y, &p))| {
            let jump: f64 = v.iter().zip(tree.branch_compensated(c)).map(|(v, mu)| v * mu).sum();
            let r = y - mean - z * dw[c] - jump;
            p * r * r
        })
        .sum::<f64>()
        .sqrt();
    Projection { mean, z, v, residual }
}

/// Exact solution of `alpha y = rhs + n dt (S - y)^+` with `alpha = 1 - a dt > 0`.
///
/// The left side minus the penalty is strictly increasing in `y`, so the root
/// is unique and lies on one side of the kink `y = S`.
pub fn implicit_solve(rhs: f64, a_dt: f64, penalty: Option<(f64, f64)>) -> f64 {
    let alpha = 1.0 - a_dt;
    let free = rhs / alpha;
    match penalty {
        Some((n_dt, s)) if free < s => (rhs + n_dt * s) / (alpha + n_dt),
        _ => free,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub y: f64,
    pub z: f64,
    pub v: Vec<f64>,
    pub representation_residual: f64,
}

/// One backward step at `node` given the values `next` on its children.
/// `barrier` is the obstacle value at the node, used by a penalized driver.
pub fn backward_step(tree: &ScenarioTree, node: NodeId, next: &[f64], driver: &Driver, barrier: Option<f64>) -> Result<StepOutput> {
    check_stepsize(tree, driver)?;
    let proj = project_zv(tree, next);
    let y = solve_candidate(tree, node, &proj, driver, barrier);
    Ok(StepOutput { y, z: proj.z, v: proj.v, representation_residual: proj.residual })
}

pub(crate) fn check_stepsize(tree: &ScenarioTree, driver: &Driver) -> Result<()> {
    let cf_dt = driver.lipschitz() * tree.dt();
    if cf_dt >= 1.0 {
        return Err(Error::StepsizeTooLarge(cf_dt));
    }
    Ok(())
}

fn solve_candidate(tree: &ScenarioTree, node: NodeId, proj: &Projection, driver: &Driver, barrier: Option<f64>) -> f64 {
    let dt = tree.dt();
    let rhs = proj.mean + driver.linear_part(node, proj.z, &proj.v) * dt;
    let penalty = match (driver.penalty, barrier) {
        (Some(n), Some(s)) => Some((n * dt, s)),
        _ => None,
    };
    implicit_solve(rhs, driver.a * dt, penalty)
}

/// Output of a full backward sweep.
#[derive(Debug, Clone)]
pub(crate) struct Sweep {
    pub y: Adapted,
    pub z: Predictable,
    pub v: PredictableMarks,
    pub residual: Predictable,
    /// `E[Y_{k+1} | F_k]`.
    pub mean: Predictable,
}

/// Backward induction from `terminal`: at each node the implicit candidate is
/// computed, then `reflect(node, candidate)` gives `Y_k`.
pub(crate) fn backward_sweep(
    tree: &ScenarioTree,
    driver: &Driver,
    terminal: &[f64],
    penalty_barrier: Option<&Adapted>,
    mut reflect: impl FnMut(NodeId, f64) -> f64,
) -> Result<Sweep> {
    check_stepsize(tree, driver)?;
    let n = tree.steps();
    if terminal.len() != tree.leaf_count() {
        return Err(Error::ShapeMismatch(format!("terminal has {} values, tree has {} leaves", terminal.len(), tree.leaf_count())));
    }
    let b = tree.branching();
    let mut y = Adapted::zeros(tree);
    *y.level_mut(n) = terminal.to_vec();
    let mut z = Predictable::zeros(tree);
    let mut v = PredictableMarks::zeros(tree);
    let mut residual = Predictable::zeros(tree);
    let mut mean = Predictable::zeros(tree);
    for k in (0..n).rev() {
        for i in 0..tree.level_width(k) {
            let node = NodeId::new(k, i);
            let proj = project_zv(tree, &y.level(k + 1)[i * b..(i + 1) * b]);
            let s = penalty_barrier.map(|s| s.get(node));
            let cand = solve_candidate(tree, node, &proj, driver, s);
            y.set(node, reflect(node, cand));
            z.set(node, proj.z);
            v.get_mut(node).copy_from_slice(&proj.v);
            residual.set(node, proj.residual);
            mean.set(node, proj.mean);
        }
    }
    Ok(Sweep { y, z, v, residual, mean })
}

impl Sweep {
    /// `Y_k - E[Y_{k+1} | F_k] - f(t_k, Y_k, Z_k, V_k) dt` at every non-leaf
    /// node: the net compensator increment.
    pub fn net_increments(&self, tree: &ScenarioTree, driver: &Driver, penalty_barrier: Option<&Adapted>) -> Predictable {
        Predictable::from_fn(tree, |node| {
            let s = penalty_barrier.map(|s| s.get(node));
            let y = self.y.get(node);
            y - self.mean.get(node) - driver.eval(node, y, self.z.get(node), self.v.get(node), s) * tree.dt()
        })
    }
}

/// Standard BSDE solve; `K` is identically zero.
pub fn solve_bsde(tree: &ScenarioTree, driver: &Driver, terminal: &[f64]) -> Result<SolutionQuadruple> {
    solve_bsde_penalized(tree, driver, terminal, None)
}

/// Standard BSDE solve where a penalized driver reads the obstacle from `barrier`.
pub fn solve_bsde_penalized(tree: &ScenarioTree, driver: &Driver, terminal: &[f64], barrier: Option<&Adapted>) -> Result<SolutionQuadruple> {
    let sweep = backward_sweep(tree, driver, terminal, barrier, |_, c| c)?;
    let zero = Adapted::zeros(tree);
    Ok(SolutionQuadruple {
        y: sweep.y,
        z: sweep.z,
        v: sweep.v,
        k: zero.clone(),
        k_c: zero.clone(),
        k_d: zero,
        residual: sweep.residual,
    })
}

//! Solution containers shared by the solvers and the checker.

use serde::{Deserialize, Serialize};

use crate::process_model::{Adapted, EvaluatedBarrier, Predictable, PredictableMarks};
use crate::scenario_tree::{NodeId, ScenarioTree};

/// Tolerance for deciding that a process sits on a barrier at a left limit.
pub const BIND_TOL: f64 = 1e-9;

/// `(Y, Z, V, K)` for one barrier, with `K = K^c + K^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionQuadruple {
    pub y: Adapted,
    pub z: Predictable,
    pub v: PredictableMarks,
    pub k: Adapted,
    pub k_c: Adapted,
    pub k_d: Adapted,
    /// `L^2` size of the part of `Y_{k+1}` not spanned by `{dB, mu~_i}`.
    pub residual: Predictable,
}

/// `(Y, Z, V, K^+, K^-)` for two barriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionQuintuple {
    pub y: Adapted,
    pub z: Predictable,
    pub v: PredictableMarks,
    pub k_plus: Adapted,
    pub k_plus_c: Adapted,
    pub k_plus_d: Adapted,
    pub k_minus: Adapted,
    pub k_minus_c: Adapted,
    pub k_minus_d: Adapted,
    pub residual: Predictable,
}

/// Which side a barrier pushes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Lower barrier: `dK^d = (L_{t-} - Y_t)^+ 1[Y_{t-} = L_{t-}]`.
    Lower,
    /// Upper barrier: `dK^d = (Y_t - U_{t-})^+ 1[Y_{t-} = U_{t-}]`.
    Upper,
}

/// Predictable jump part of one compensator increment at a declared jump level.
///
/// `y_prev` is the solution at the assigning node (the discrete `Y_{t-}`),
/// `left` the barrier's left value there and `mean_next` the predictable
/// projection `E[Y_t | F_{t-}]`. The result is capped by the total increment.
pub fn jump_part(side: Side, increment: f64, y_prev: f64, left: f64, mean_next: f64) -> f64 {
    if (y_prev - left).abs() > BIND_TOL {
        return 0.0;
    }
    let gap = match side {
        Side::Lower => left - mean_next,
        Side::Upper => mean_next - left,
    };
    gap.max(0.0).min(increment.max(0.0))
}

/// Cumulative compensator from predictable increments (`inc` at a level-`k`
/// node is `K_{k+1} - K_k` on every child).
pub fn accumulate(tree: &ScenarioTree, inc: &Predictable) -> Adapted {
    let mut k = Adapted::zeros(tree);
    let b = tree.branching();
    for lvl in 0..tree.steps() {
        let prev = k.level(lvl).to_vec();
        let next = k.level_mut(lvl + 1);
        for (i, &acc) in prev.iter().enumerate() {
            let d = inc.level(lvl)[i];
            for c in 0..b {
                next[i * b + c] = acc + d;
            }
        }
    }
    k
}

/// Predictable increments `K_{k+1} - K_k` recovered from a cumulative process
/// (read off the first child of each node).
pub fn increments(tree: &ScenarioTree, k: &Adapted) -> Predictable {
    let b = tree.branching();
    Predictable::from_fn(tree, |n| k.level(n.level + 1)[n.index * b] - k.get(n))
}

/// Splits the increments `inc` of a compensator into `(K^c, K^d)` using the
/// declared jump levels of `barrier` and the solution `y`.
pub fn split_compensator(
    tree: &ScenarioTree,
    y: &Adapted,
    inc: &Predictable,
    barrier: &EvaluatedBarrier,
    side: Side,
) -> (Adapted, Adapted) {
    let mut d_inc = Predictable::zeros(tree);
    for jump in &barrier.jumps {
        let lvl = jump.level - 1;
        let means = tree.expect_level(y.level(jump.level));
        for node in tree.nodes(lvl) {
            let i = node.index;
            let d = jump_part(side, inc.level(lvl)[i], y.level(lvl)[i], jump.values[i], means[i]);
            d_inc.set(NodeId::new(lvl, i), d);
        }
    }
    let c_inc = Predictable::from_fn(tree, |n| (inc.get(n) - d_inc.get(n)).max(0.0));
    (accumulate(tree, &c_inc), accumulate(tree, &d_inc))
}

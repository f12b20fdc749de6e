//! Discrete Snell envelopes on the tree.
//!
//! `R_N = eta_N`, `R_k = max(eta_k, E[R_{k+1} | F_k])`. The Doob-Meyer
//! decomposition `R = M - K` uses the predictable compensator
//! `K_{k+1} - K_k = R_k - E[R_{k+1} | F_k] >= 0`.

use crate::error::{Error, Result};
use crate::process_model::{Adapted, EvaluatedBarrier, LeftValues, Predictable};
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::solution::{accumulate, split_compensator, Side};

/// Oracle limits: depth of the subtree and number of its leaves.
pub const BRUTE_FORCE_MAX_DEPTH: usize = 6;
pub const BRUTE_FORCE_MAX_LEAVES: u128 = 4096;
/// Subtrees with at most this many stopping times are enumerated one by one.
const EXHAUSTIVE_MAX_STOPPING_TIMES: u128 = 1_000;

#[derive(Debug, Clone)]
pub struct SnellResult {
    pub envelope: Adapted,
    pub martingale: Adapted,
    pub compensator: Adapted,
    /// `E[R_{k+1} | F_k]` at every non-leaf node.
    pub continuation: Predictable,
    /// `K_{k+1} - K_k` at every non-leaf node.
    pub increments: Predictable,
}

pub fn snell(tree: &ScenarioTree, payoff: &Adapted) -> SnellResult {
    let n = tree.steps();
    let mut envelope = payoff.clone();
    let mut continuation = Predictable::zeros(tree);
    let mut increments = Predictable::zeros(tree);
    for k in (0..n).rev() {
        let cont = tree.expect_level(envelope.level(k + 1));
        let r = envelope.level_mut(k);
        for (i, c) in cont.iter().enumerate() {
            r[i] = r[i].max(*c);
        }
        increments.level_mut(k).iter_mut().zip(r.iter()).zip(&cont).for_each(|((d, r), c)| *d = r - c);
        *continuation.level_mut(k) = cont;
    }
    let compensator = accumulate(tree, &increments);
    let martingale = envelope.zip_with(&compensator, |r, k| r + k);
    SnellResult { envelope, martingale, compensator, continuation, increments }
}

/// `max_tau E[eta_tau | node]` over all stopping times of the subtree rooted at
/// `node`, by enumeration.
///
/// Small subtrees are enumerated stopping time by stopping time; larger ones
/// by a recursive stop-or-continue search over the subtree, evaluated on the
/// paths of the maximizing rule.
pub fn brute_force_value(tree: &ScenarioTree, payoff: &Adapted, node: NodeId) -> Result<f64> {
    let depth = tree.steps() - node.level;
    let leaves = (tree.branching() as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    if depth > BRUTE_FORCE_MAX_DEPTH || leaves > BRUTE_FORCE_MAX_LEAVES {
        return Err(Error::TooLargeToEnumerate { depth, leaves });
    }
    if stopping_time_count(tree.branching(), depth) <= EXHAUSTIVE_MAX_STOPPING_TIMES {
        let all = enumerate_values(tree, payoff, node);
        return Ok(all.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    let mut stop = std::collections::HashSet::new();
    search(tree, payoff, node, &mut stop);
    Ok(forward_value(tree, payoff, node, &stop))
}

/// Number of stopping times of a full subtree of the given depth.
fn stopping_time_count(branching: usize, depth: usize) -> u128 {
    let mut count: u128 = 1;
    for _ in 0..depth {
        count = count.checked_pow(branching as u32).map_or(u128::MAX, |c| c.saturating_add(1));
    }
    count
}

/// `E[eta_tau | node]` for every stopping time `tau >= t_node`.
fn enumerate_values(tree: &ScenarioTree, payoff: &Adapted, node: NodeId) -> Vec<f64> {
    let here = payoff.get(node);
    if node.level == tree.steps() {
        return vec![here];
    }
    let probs = tree.child_probs();
    let mut combos = vec![0.0];
    for (c, idx) in tree.children(node).enumerate() {
        let child_vals = enumerate_values(tree, payoff, NodeId::new(node.level + 1, idx));
        combos = combos
            .iter()
            .flat_map(|acc| child_vals.iter().map(move |v| acc + probs[c] * v))
            .collect();
    }
    combos.push(here);
    combos
}

/// Marks the nodes where stopping is at least as good as continuing, top-down
/// over the subtree; returns the best value.
fn search(tree: &ScenarioTree, payoff: &Adapted, node: NodeId, stop: &mut std::collections::HashSet<NodeId>) -> f64 {
    let here = payoff.get(node);
    if node.level == tree.steps() {
        stop.insert(node);
        return here;
    }
    let probs = tree.child_probs();
    let cont: f64 = tree
        .children(node)
        .enumerate()
        .map(|(c, idx)| probs[c] * search(tree, payoff, NodeId::new(node.level + 1, idx), stop))
        .sum();
    if here >= cont {
        stop.insert(node);
        here
    } else {
        cont
    }
}

/// `E[eta_tau | node]` for the hitting time of `stop`, summed path by path.
fn forward_value(tree: &ScenarioTree, payoff: &Adapted, node: NodeId, stop: &std::collections::HashSet<NodeId>) -> f64 {
    let mut total = 0.0;
    let mut frontier = vec![(node, 1.0)];
    while let Some((cur, p)) = frontier.pop() {
        if stop.contains(&cur) {
            total += p * payoff.get(cur);
            continue;
        }
        for idx in tree.children(cur) {
            let child = NodeId::new(cur.level + 1, idx);
            frontier.push((child, p * tree.transition_prob(child)));
        }
    }
    total
}

/// A stopping rule: stop at the first node of the path (from the starting
/// node on) flagged in `stop`; leaves always stop.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    stop: Vec<Vec<bool>>,
}

impl StoppingRule {
    pub fn stops_at(&self, node: NodeId) -> bool {
        self.stop[node.level][node.index]
    }

    /// `E[eta_tau | node]` for the rule started at every node.
    pub fn value(&self, tree: &ScenarioTree, payoff: &Adapted) -> Adapted {
        let n = tree.steps();
        let mut out = payoff.clone();
        for k in (0..n).rev() {
            let cont = tree.expect_level(out.level(k + 1));
            let lvl = out.level_mut(k);
            for (i, c) in cont.into_iter().enumerate() {
                if !self.stop[k][i] {
                    lvl[i] = c;
                }
            }
        }
        out
    }

    /// Stopping level along the path to `leaf`, starting from the root.
    pub fn stopping_level(&self, tree: &ScenarioTree, leaf: NodeId) -> usize {
        let mut path = vec![leaf];
        while let Some(p) = tree.parent(*path.last().unwrap()) {
            path.push(p);
        }
        path.iter().rev().find(|n| self.stops_at(**n)).map_or(tree.steps(), |n| n.level)
    }

    /// Largest `|E[R_{k+1} | F_k] - R_k|` over nodes strictly before the rule
    /// stops: zero when `(R_{k ^ tau})` is a martingale.
    pub fn stopped_martingale_defect(&self, tree: &ScenarioTree, envelope: &Adapted) -> f64 {
        let mut worst: f64 = 0.0;
        // alive[k][i]: the rule started at the root has not stopped before reaching node i
        let mut alive = vec![true];
        for k in 0..tree.steps() {
            let cont = tree.expect_level(envelope.level(k + 1));
            let mut next = Vec::with_capacity(alive.len() * tree.branching());
            for (i, &a) in alive.iter().enumerate() {
                let running = a && !self.stop[k][i];
                if running {
                    worst = worst.max((cont[i] - envelope.level(k)[i]).abs());
                }
                next.extend(std::iter::repeat_n(running, tree.branching()));
            }
            alive = next;
        }
        worst
    }
}

/// Optimal stopping rule `tau_t = inf{s >= t : K_s > K_t} ^ 1`: stop at the
/// first node whose next compensator increment is positive.
pub fn optimal_stopping_time(tree: &ScenarioTree, res: &SnellResult) -> StoppingRule {
    let n = tree.steps();
    let mut stop: Vec<Vec<bool>> = (0..n).map(|k| res.increments.level(k).iter().map(|&d| d > 0.0).collect()).collect();
    stop.push(vec![true; tree.level_width(n)]);
    StoppingRule { stop }
}

/// Earliest optimal rule: stop at the first node where `R = eta`.
pub fn earliest_stopping_time(tree: &ScenarioTree, res: &SnellResult, payoff: &Adapted) -> StoppingRule {
    let stop = (0..=tree.steps())
        .map(|k| res.envelope.level(k).iter().zip(payoff.level(k)).map(|(r, e)| r <= e).collect())
        .collect();
    StoppingRule { stop }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    /// Smallest `R(eta_{j+1}) - R(eta_j)` over all nodes and `j`.
    pub min_step: f64,
    /// Smallest `R(eta_J) - R(eta_j)` over all nodes and `j`.
    pub min_gap_to_last: f64,
    pub monotone: bool,
    pub envelopes: Vec<Adapted>,
}

/// Checks that envelopes of a pointwise nondecreasing sequence are
/// nondecreasing and dominated by the last one.
pub fn monotone_limit_check(tree: &ScenarioTree, seq: &[Adapted]) -> Result<MonotoneReport> {
    for (j, pair) in seq.windows(2).enumerate() {
        if let Some((node, _)) = pair[0].iter().find(|(node, v)| *v > pair[1].get(*node)) {
            return Err(Error::NotMonotone { entry: j + 1, level: node.level, index: node.index });
        }
    }
    let envelopes: Vec<Adapted> = seq.iter().map(|e| snell(tree, e).envelope).collect();
    let min_over = |a: &Adapted, b: &Adapted| b.zip_with(a, |x, y| x - y).iter().fold(f64::INFINITY, |m, (_, v)| m.min(v));
    let min_step = envelopes.windows(2).map(|w| min_over(&w[0], &w[1])).fold(f64::INFINITY, f64::min);
    let last = envelopes.last().cloned();
    let min_gap_to_last = last.map_or(f64::INFINITY, |l| envelopes.iter().map(|e| min_over(e, &l)).fold(f64::INFINITY, f64::min));
    Ok(MonotoneReport { min_step, min_gap_to_last, monotone: min_step >= 0.0 && min_gap_to_last >= 0.0, envelopes })
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub k_c: Adapted,
    pub k_d: Adapted,
    /// `E[K^d_1]`.
    pub kd_mass: f64,
    pub regular: bool,
}

/// Splits the compensator into continuous-type and predictable-jump parts.
///
/// `left` holds the left values `eta_{t-}` at the declared predictable jump
/// levels of `payoff`; mass at other levels is continuous-type.
pub fn regularity_check(tree: &ScenarioTree, res: &SnellResult, payoff: &Adapted, left: &[LeftValues]) -> RegularityReport {
    let barrier = EvaluatedBarrier { values: payoff.clone(), jumps: left.to_vec() };
    let (k_c, k_d) = split_compensator(tree, &res.envelope, &res.increments, &barrier, Side::Lower);
    let kd_mass = tree.expect_terminal(&k_d);
    RegularityReport { k_c, k_d, kd_mass, regular: kd_mass <= 0.0 }
}

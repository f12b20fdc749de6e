//! Exact finite filtered probability space.
//!
//! The tree is non-recombining over the uniform grid `t_k = k / N` of `[0, 1]`.
//! Every node has `2 (m + 1)` children, one per pair (Brownian sign, jump
//! outcome), where `m` is the number of marks. The Brownian increment is
//! `+sqrt(dt)` or `-sqrt(dt)` with probability one half each, independent of
//! the jump branch. The jump branch is "no jump" with probability
//! `1 - sum_i lambda_i dt` or "mark i" with probability `lambda_i dt`.
//!
//! Child `c` of a node encodes the jump outcome `c / 2` (0 is no jump, `j > 0`
//! is mark `j - 1`) and the Brownian sign `c % 2` (0 is up, 1 is down). Nodes
//! of level `k` are stored contiguously, so the children of node `i` at level
//! `k` are nodes `i * B .. (i + 1) * B` at level `k + 1` and the level-`k`
//! nodes are exactly the atoms of `F_{t_k}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the total number of nodes of a tree.
pub const DEFAULT_NODE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    /// Jump size `e_i` carried by this mark.
    pub size: f64,
    /// Intensity `lambda_i` (rate per unit time).
    pub intensity: f64,
}

/// Finite mark space with its Levy measure, `lambda({e_i}) = lambda_i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Mark>", into = "Vec<Mark>")]
pub struct MarkSet {
    marks: Vec<Mark>,
}

impl MarkSet {
    pub fn new(marks: Vec<Mark>) -> Result<Self> {
        for (i, m) in marks.iter().enumerate() {
            if !(m.intensity.is_finite() && m.intensity > 0.0) {
                return Err(Error::InvalidMarks(format!(
                    "mark {i} has non-positive intensity {}",
                    m.intensity
                )));
            }
            if !m.size.is_finite() {
                return Err(Error::InvalidMarks(format!("mark {i} has non-finite size")));
            }
            if marks[..i].iter().any(|o| o.size == m.size) {
                return Err(Error::InvalidMarks(format!("mark size {} is repeated", m.size)));
            }
        }
        Ok(Self { marks })
    }

    /// The pure Brownian setting.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Convenience constructor from `(size, intensity)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(size, intensity)| Mark { size, intensity })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.marks.iter().map(|m| m.intensity).collect()
    }

    pub fn total_intensity(&self) -> f64 {
        self.marks.iter().map(|m| m.intensity).sum()
    }
}

impl TryFrom<Vec<Mark>> for MarkSet {
    type Error = Error;

    fn try_from(marks: Vec<Mark>) -> Result<Self> {
        Self::new(marks)
    }
}

impl From<MarkSet> for Vec<Mark> {
    fn from(set: MarkSet) -> Self {
        set.marks
    }
}

/// Position of a node: its level `k` (time `t_k`) and its index within the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub level: usize,
    pub index: usize,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        Self { level, index }
    }
}

/// Label of the edge from a parent to one of its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branch {
    /// `true` for the `+sqrt(dt)` Brownian increment.
    pub up: bool,
    /// `None` when no jump occurs on the step, otherwise the mark index.
    pub jump: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ScenarioTree {
    steps: usize,
    dt: f64,
    marks: MarkSet,
    intensities: Vec<f64>,
    branching: usize,
    child_prob: Vec<f64>,
    child_dw: Vec<f64>,
    /// `child_comp[c * m + i]` is the compensated increment of mark `i` on branch `c`.
    child_comp: Vec<f64>,
    w: Vec<Vec<f64>>,
    /// `counts[k][i * m + j]` is the number of mark-`j` jumps up to `t_k` at node `i`.
    counts: Vec<Vec<u32>>,
}

/// Builds the tree with the default node cap.
pub fn build_tree(num_steps: usize, marks: MarkSet) -> Result<ScenarioTree> {
    ScenarioTree::with_cap(num_steps, marks, DEFAULT_NODE_CAP)
}

impl ScenarioTree {
    pub fn with_cap(num_steps: usize, marks: MarkSet, node_cap: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidInput("num_steps must be at least 1".into()));
        }
        let dt = 1.0 / num_steps as f64;
        let jump_mass = marks.total_intensity() * dt;
        if jump_mass >= 1.0 {
            return Err(Error::InfeasibleIntensity(jump_mass));
        }
        let m = marks.len();
        let branching = 2 * (m + 1);

        let mut total: u128 = 0;
        let mut width: u128 = 1;
        for _ in 0..=num_steps {
            total += width;
            if total > node_cap as u128 {
                return Err(Error::TreeTooLarge { nodes: Self::count_nodes(branching, num_steps), cap: node_cap });
            }
            width *= branching as u128;
        }

        let intensities = marks.intensities();
        let sqrt_dt = dt.sqrt();
        let mut child_prob = Vec::with_capacity(branching);
        let mut child_dw = Vec::with_capacity(branching);
        let mut child_comp = Vec::with_capacity(branching * m);
        for c in 0..branching {
            let jump = c / 2;
            let p_jump = if jump == 0 { 1.0 - jump_mass } else { intensities[jump - 1] * dt };
            child_prob.push(0.5 * p_jump);
            child_dw.push(if c % 2 == 0 { sqrt_dt } else { -sqrt_dt });
            for (i, lambda) in intensities.iter().enumerate() {
                let hit = if jump == i + 1 { 1.0 } else { 0.0 };
                child_comp.push(hit - lambda * dt);
            }
        }
        let norm: f64 = child_prob.iter().sum();
        for p in &mut child_prob {
            *p /= norm;
        }

        let mut w = Vec::with_capacity(num_steps + 1);
        let mut counts = Vec::with_capacity(num_steps + 1);
        w.push(vec![0.0]);
        counts.push(vec![0u32; m]);
        for k in 0..num_steps {
            let prev_w = &w[k];
            let prev_counts = &counts[k];
            let width = prev_w.len() * branching;
            let mut next_w = Vec::with_capacity(width);
            let mut next_counts = Vec::with_capacity(width * m);
            for (i, &wi) in prev_w.iter().enumerate() {
                let base = &prev_counts[i * m..(i + 1) * m];
                for (c, dw) in child_dw.iter().enumerate() {
                    next_w.push(wi + dw);
                    let jump = c / 2;
                    for (j, &n) in base.iter().enumerate() {
                        next_counts.push(n + u32::from(jump == j + 1));
                    }
                }
            }
            w.push(next_w);
            counts.push(next_counts);
        }

        Ok(Self { steps: num_steps, dt, marks, intensities, branching, child_prob, child_dw, child_comp, w, counts })
    }

    fn count_nodes(branching: usize, steps: usize) -> u128 {
        let mut total: u128 = 0;
        let mut width: u128 = 1;
        for _ in 0..=steps {
            total = total.saturating_add(width);
            width = width.saturating_mul(branching as u128);
        }
        total
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    pub fn marks(&self) -> &MarkSet {
        &self.marks
    }

    pub fn num_marks(&self) -> usize {
        self.intensities.len()
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Number of children of every non-leaf node.
    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn level_width(&self, level: usize) -> usize {
        self.w[level].len()
    }

    pub fn node_count(&self) -> usize {
        self.w.iter().map(Vec::len).sum()
    }

    pub fn leaf_count(&self) -> usize {
        self.level_width(self.steps)
    }

    pub fn nodes(&self, level: usize) -> impl Iterator<Item = NodeId> {
        (0..self.level_width(level)).map(move |index| NodeId { level, index })
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        (node.level > 0).then(|| NodeId::new(node.level - 1, node.index / self.branching))
    }

    /// Indices (at level `node.level + 1`) of the children of `node`.
    pub fn children(&self, node: NodeId) -> std::ops::Range<usize> {
        debug_assert!(node.level < self.steps, "leaves have no children");
        node.index * self.branching..(node.index + 1) * self.branching
    }

    pub fn is_child(&self, node: NodeId, child: NodeId) -> bool {
        child.level == node.level + 1 && child.index / self.branching == node.index
    }

    /// Label of the edge into `node` from its parent.
    pub fn branch(&self, node: NodeId) -> Option<Branch> {
        (node.level > 0).then(|| {
            let c = node.index % self.branching;
            Branch { up: c.is_multiple_of(2), jump: (c / 2).checked_sub(1) }
        })
    }

    /// Transition probability from the parent; 1 for the root.
    pub fn transition_prob(&self, node: NodeId) -> f64 {
        if node.level == 0 {
            1.0
        } else {
            self.child_prob[node.index % self.branching]
        }
    }

    /// Probabilities of the `B` children of any node, in child order.
    pub fn child_probs(&self) -> &[f64] {
        &self.child_prob
    }

    /// Brownian increments `dB` of the `B` children of any node, in child order.
    pub fn child_increments(&self) -> &[f64] {
        &self.child_dw
    }

    /// Compensated jump increments of child branch `c`, one entry per mark.
    pub fn branch_compensated(&self, c: usize) -> &[f64] {
        let m = self.num_marks();
        &self.child_comp[c * m..(c + 1) * m]
    }

    /// `mu~_i = 1[jump on the step is mark i] - lambda_i dt` on the edge `node -> child`.
    pub fn compensated_increment(&self, node: NodeId, child: NodeId) -> Vec<f64> {
        assert!(self.is_child(node, child), "{child:?} is not a child of {node:?}");
        self.branch_compensated(child.index % self.branching).to_vec()
    }

    /// Unconditional probability of reaching `node` from the root.
    pub fn path_prob(&self, node: NodeId) -> f64 {
        let mut p = 1.0;
        let mut cur = node;
        while let Some(parent) = self.parent(cur) {
            p *= self.transition_prob(cur);
            cur = parent;
        }
        p
    }

    /// Cumulative Brownian value `w` at the node.
    pub fn w(&self, node: NodeId) -> f64 {
        self.w[node.level][node.index]
    }

    pub fn w_level(&self, level: usize) -> &[f64] {
        &self.w[level]
    }

    /// Cumulative jump counts per mark at the node.
    pub fn counts(&self, node: NodeId) -> &[u32] {
        let m = self.num_marks();
        &self.counts[node.level][node.index * m..(node.index + 1) * m]
    }

    /// `E[values | node]` where `values` is indexed by the nodes of level `node.level + 1`.
    pub fn conditional_expectation(&self, next_level: &[f64], node: NodeId) -> f64 {
        let start = node.index * self.branching;
        self.expect_children(&next_level[start..start + self.branching])
    }

    /// Expectation of one value per child (in child order).
    pub fn expect_children(&self, children: &[f64]) -> f64 {
        debug_assert_eq!(children.len(), self.branching);
        children.iter().zip(&self.child_prob).map(|(v, p)| v * p).sum()
    }

    /// `E[X_N]` for a process given by its per-level values.
    pub fn expect_terminal(&self, x: &crate::process_model::Adapted) -> f64 {
        self.expect_at(x.terminal())
    }

    /// `E[X_k]` for one value per node of some level `k`.
    pub fn expect_at(&self, values: &[f64]) -> f64 {
        let mut level = values.to_vec();
        while level.len() > 1 {
            level = self.expect_level(&level);
        }
        level[0]
    }

    /// Conditional expectations of a full level onto the previous level.
    pub fn expect_level(&self, next_level: &[f64]) -> Vec<f64> {
        next_level.chunks_exact(self.branching).map(|ch| self.expect_children(ch)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_without_marks() {
        let tree = build_tree(1, MarkSet::empty()).unwrap();
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree.child_probs(), &[0.5, 0.5]);
        assert_eq!(tree.w_level(1), &[1.0, -1.0]);
    }

    #[test]
    fn two_steps_one_mark() {
        let marks = MarkSet::from_pairs(&[(1.0, 0.5)]).unwrap();
        let tree = build_tree(2, marks).unwrap();
        assert_eq!(tree.branching(), 4);
        assert_eq!(tree.leaf_count(), 16);
        assert_eq!(tree.node_count(), 21);
        assert_eq!(tree.child_probs(), &[0.375, 0.375, 0.125, 0.125]);
        assert_eq!(tree.child_probs().iter().sum::<f64>(), 1.0);
        // leaf 15 = (mark, down) twice
        let leaf = NodeId::new(2, 15);
        assert_eq!(tree.counts(leaf), &[2]);
        assert!((tree.w(leaf) + 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(tree.branch(leaf), Some(Branch { up: false, jump: Some(0) }));
    }

    #[test]
    fn infeasible_intensity() {
        let marks = MarkSet::from_pairs(&[(1.0, 1.1)]).unwrap();
        assert!(matches!(build_tree(1, marks), Err(Error::InfeasibleIntensity(_))));
    }

    #[test]
    fn node_cap() {
        let marks = MarkSet::from_pairs(&[(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let err = ScenarioTree::with_cap(10, marks, DEFAULT_NODE_CAP).unwrap_err();
        assert!(matches!(err, Error::TreeTooLarge { .. }));
        assert!(ScenarioTree::with_cap(3, MarkSet::empty(), 14).is_err());
        assert!(ScenarioTree::with_cap(3, MarkSet::empty(), 15).is_ok());
    }

    #[test]
    fn rejects_bad_marks() {
        assert!(MarkSet::from_pairs(&[(1.0, 0.0)]).is_err());
        assert!(MarkSet::from_pairs(&[(1.0, 0.2), (1.0, 0.3)]).is_err());
        assert!(build_tree(0, MarkSet::empty()).is_err());
    }

    #[test]
    fn compensated_increments() {
        let marks = MarkSet::from_pairs(&[(1.0, 0.5)]).unwrap();
        let tree = build_tree(2, marks).unwrap();
        let root = NodeId::ROOT;
        assert_eq!(tree.compensated_increment(root, NodeId::new(1, 0)), vec![-0.25]);
        assert_eq!(tree.compensated_increment(root, NodeId::new(1, 3)), vec![0.75]);
        let comp: Vec<f64> = (0..4).map(|c| tree.branch_compensated(c)[0]).collect();
        assert!(tree.expect_children(&comp).abs() < 1e-16);
    }

    #[test]
    fn conditional_expectation_basics() {
        let marks = MarkSet::from_pairs(&[(1.0, 0.3), (-0.5, 0.7)]).unwrap();
        let tree = build_tree(3, marks).unwrap();
        let node = NodeId::new(1, 4);
        let consts = vec![2.5; tree.level_width(2)];
        assert!((tree.conditional_expectation(&consts, node) - 2.5).abs() < 1e-15);
        let dw: Vec<f64> = tree
            .nodes(2)
            .map(|n| tree.w(n) - tree.w(tree.parent(n).unwrap()))
            .collect();
        assert!(tree.conditional_expectation(&dw, node).abs() < 1e-15);
    }

    #[test]
    fn parent_child_links() {
        let marks = MarkSet::from_pairs(&[(1.0, 0.3)]).unwrap();
        let tree = build_tree(3, marks).unwrap();
        for node in tree.nodes(2) {
            for c in tree.children(node) {
                let child = NodeId::new(3, c);
                assert_eq!(tree.parent(child), Some(node));
                assert!(tree.is_child(node, child));
            }
        }
        let leaf = NodeId::new(3, 37);
        let p: f64 = tree.path_prob(leaf);
        let q: f64 = [37 % 4, (37 / 4) % 4, 37 / 16].iter().map(|&c| tree.child_probs()[c]).product();
        assert!((p - q).abs() < 1e-16);
    }
}

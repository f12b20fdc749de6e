//! Problem data on the tree: processes indexed by nodes, terminal conditions,
//! drivers and barriers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario_tree::{NodeId, ScenarioTree};

/// Grid times are matched against declared times with this slack.
const GRID_EPS: f64 = 1e-9;

/// One real value per node, for every level `0..=N`. The value at a level-`k`
/// node is the value of the process at `t_k` on that atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapted {
    levels: Vec<Vec<f64>>,
}

impl Adapted {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        Self::constant(tree, 0.0)
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self { levels: (0..=tree.steps()).map(|k| vec![c; tree.level_width(k)]).collect() }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(NodeId) -> f64) -> Self {
        Self { levels: (0..=tree.steps()).map(|k| tree.nodes(k).map(&mut f).collect()).collect() }
    }

    /// Wraps raw per-level values, checking them against the tree shape.
    pub fn from_levels(tree: &ScenarioTree, levels: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(tree, &levels, tree.steps() + 1, 1, "adapted process")?;
        Ok(Self { levels })
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.levels[node.level][node.index]
    }

    pub fn set(&mut self, node: NodeId, value: f64) {
        self.levels[node.level][node.index] = value;
    }

    pub fn terminal(&self) -> &[f64] {
        &self.levels[self.levels.len() - 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { levels: self.levels.iter().map(|l| l.iter().map(|&x| f(x)).collect()).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.levels.len(), other.levels.len());
        Self {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.levels, &other.levels)
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Iterates `(node, value)` over all nodes.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(k, l)| l.iter().enumerate().map(move |(i, &v)| (NodeId::new(k, i), v)))
    }
}

/// One real value per non-leaf node; the value at a level-`k` node applies to
/// the step `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictable {
    levels: Vec<Vec<f64>>,
}

impl Predictable {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        Self { levels: (0..tree.steps()).map(|k| vec![0.0; tree.level_width(k)]).collect() }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(NodeId) -> f64) -> Self {
        Self { levels: (0..tree.steps()).map(|k| tree.nodes(k).map(&mut f).collect()).collect() }
    }

    pub fn from_levels(tree: &ScenarioTree, levels: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(tree, &levels, tree.steps(), 1, "predictable process")?;
        Ok(Self { levels })
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.levels[node.level][node.index]
    }

    pub fn set(&mut self, node: NodeId, value: f64) {
        self.levels[node.level][node.index] = value;
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.levels, &other.levels)
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { levels: self.levels.iter().map(|l| l.iter().map(|&x| f(x)).collect()).collect() }
    }
}

/// Per-mark predictable process (the `V` component): `m` values per non-leaf node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictableMarks {
    marks: usize,
    levels: Vec<Vec<f64>>,
}

impl PredictableMarks {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        let m = tree.num_marks();
        Self { marks: m, levels: (0..tree.steps()).map(|k| vec![0.0; tree.level_width(k) * m]).collect() }
    }

    pub fn from_levels(tree: &ScenarioTree, levels: Vec<Vec<f64>>) -> Result<Self> {
        let m = tree.num_marks();
        check_shape(tree, &levels, tree.steps(), m, "per-mark predictable process")?;
        Ok(Self { marks: m, levels })
    }

    pub fn num_marks(&self) -> usize {
        self.marks
    }

    pub fn get(&self, node: NodeId) -> &[f64] {
        &self.levels[node.level][node.index * self.marks..(node.index + 1) * self.marks]
    }

    pub fn get_mut(&mut self, node: NodeId) -> &mut [f64] {
        &mut self.levels[node.level][node.index * self.marks..(node.index + 1) * self.marks]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.levels, &other.levels)
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { levels: self.levels.iter().map(|l| l.iter().map(|&x| f(x)).collect()).collect(), ..self.clone() }
    }
}

fn check_shape(tree: &ScenarioTree, levels: &[Vec<f64>], expected_levels: usize, per_node: usize, what: &str) -> Result<()> {
    if levels.len() != expected_levels {
        return Err(Error::ShapeMismatch(format!("{what}: {} levels, expected {expected_levels}", levels.len())));
    }
    for (k, l) in levels.iter().enumerate() {
        if l.len() != tree.level_width(k) * per_node {
            return Err(Error::ShapeMismatch(format!(
                "{what}: level {k} has {} entries, expected {}",
                l.len(),
                tree.level_width(k) * per_node
            )));
        }
    }
    Ok(())
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Running sum `sum_{j<k} g_j(ancestor) dt` along each path; `g` is evaluated at
/// the level-`j` ancestor of the node.
pub fn path_integral(tree: &ScenarioTree, g: impl Fn(NodeId) -> f64) -> Adapted {
    let mut out = Adapted::zeros(tree);
    let b = tree.branching();
    for k in 0..tree.steps() {
        let (head, tail) = out.levels.split_at_mut(k + 1);
        let prev = &head[k];
        let next = &mut tail[0];
        for (i, &acc) in prev.iter().enumerate() {
            let inc = g(NodeId::new(k, i)) * tree.dt();
            for c in 0..b {
                next[i * b + c] = acc + inc;
            }
        }
    }
    out
}

/// `(sum_{k<N} E[h(node)^2] dt)^{1/2}`, the `dt x dP` norm of a function of
/// the non-leaf nodes.
pub fn dt_dp_norm(tree: &ScenarioTree, h: impl Fn(NodeId) -> f64) -> f64 {
    (0..tree.steps())
        .map(|k| {
            let sq: Vec<f64> = tree.nodes(k).map(|n| h(n).powi(2)).collect();
            tree.expect_at(&sq) * tree.dt()
        })
        .sum::<f64>()
        .sqrt()
}

/// `E[X | F_k]` at every node for a terminal random variable `X` given on the leaves.
pub fn conditional_expectations(tree: &ScenarioTree, terminal: &[f64]) -> Adapted {
    let n = tree.steps();
    let mut levels = vec![Vec::new(); n + 1];
    levels[n] = terminal.to_vec();
    for k in (0..n).rev() {
        levels[k] = tree.expect_level(&levels[k + 1]);
    }
    Adapted { levels }
}

/// Small expression language for terminal conditions and stochastic barrier parts,
/// evaluated at a node from `(t, w, jump counts)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// Grid time `t_k`.
    Time,
    /// Cumulative Brownian value.
    W,
    /// Number of jumps of mark `i` so far.
    Count(usize),
    /// `N_i(t) - lambda_i t`.
    CompensatedCount(usize),
    /// `sum_i e_i N_i(t)`, the compound-Poisson value.
    JumpSum,
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Scale { factor: f64, of: Box<Expr> },
    Max(Vec<Expr>),
    Min(Vec<Expr>),
    PositivePart(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, tree: &ScenarioTree, node: NodeId) -> f64 {
        let t = tree.time(node.level);
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::W => tree.w(node),
            Expr::Count(i) => tree.counts(node)[*i] as f64,
            Expr::CompensatedCount(i) => tree.counts(node)[*i] as f64 - tree.intensities()[*i] * t,
            Expr::JumpSum => tree
                .counts(node)
                .iter()
                .zip(tree.marks().marks())
                .map(|(&n, m)| n as f64 * m.size)
                .sum(),
            Expr::Sum(xs) => xs.iter().map(|x| x.eval(tree, node)).sum(),
            Expr::Product(xs) => xs.iter().map(|x| x.eval(tree, node)).product(),
            Expr::Scale { factor, of } => factor * of.eval(tree, node),
            Expr::Max(xs) => xs.iter().map(|x| x.eval(tree, node)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(xs) => xs.iter().map(|x| x.eval(tree, node)).fold(f64::INFINITY, f64::min),
            Expr::PositivePart(x) => x.eval(tree, node).max(0.0),
            Expr::Exp(x) => x.eval(tree, node).exp(),
        }
    }

    /// Rejects references to marks the tree does not have.
    pub fn validate(&self, num_marks: usize) -> Result<()> {
        match self {
            Expr::Count(i) | Expr::CompensatedCount(i) if *i >= num_marks => {
                Err(Error::InvalidInput(format!("expression refers to mark {i}, only {num_marks} marks")))
            }
            Expr::Sum(xs) | Expr::Product(xs) | Expr::Max(xs) | Expr::Min(xs) => {
                xs.iter().try_for_each(|x| x.validate(num_marks))
            }
            Expr::Scale { of, .. } | Expr::PositivePart(of) | Expr::Exp(of) => of.validate(num_marks),
            _ => Ok(()),
        }
    }
}

/// Terminal condition `xi`, evaluated on the leaves.
pub type TerminalSpec = Expr;

pub fn eval_terminal(spec: &TerminalSpec, tree: &ScenarioTree) -> Result<Vec<f64>> {
    spec.validate(tree.num_marks())?;
    let values: Vec<f64> = tree.nodes(tree.steps()).map(|n| spec.eval(tree, n)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("terminal value is not finite at leaf {i}")));
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    pub time: f64,
    pub value: f64,
}

/// Right-continuous piecewise-constant function of time: `initial` on
/// `[0, t_1)`, then `value_j` on `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piecewise {
    pub initial: f64,
    #[serde(default)]
    pub breaks: Vec<Breakpoint>,
}

impl Piecewise {
    pub fn constant(c: f64) -> Self {
        Self { initial: c, breaks: Vec::new() }
    }

    pub fn step(initial: f64, time: f64, value: f64) -> Self {
        Self { initial, breaks: vec![Breakpoint { time, value }] }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() {
            return Err(Error::InvalidInput("piecewise initial value is not finite".into()));
        }
        for (j, b) in self.breaks.iter().enumerate() {
            if !(b.value.is_finite() && (0.0..=1.0).contains(&b.time)) {
                return Err(Error::InvalidInput(format!("invalid breakpoint {j}: {b:?}")));
            }
            if j > 0 && self.breaks[j - 1].time >= b.time {
                return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        self.breaks
            .iter()
            .take_while(|b| b.time <= t + GRID_EPS)
            .last()
            .map_or(self.initial, |b| b.value)
    }

    /// `lim_{s -> t-}` of the function.
    pub fn left_value(&self, t: f64) -> f64 {
        self.breaks
            .iter()
            .take_while(|b| b.time < t - GRID_EPS)
            .last()
            .map_or(self.initial, |b| b.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredJump {
    pub time: f64,
    /// Added to the left value at this time.
    #[serde(default)]
    pub left_offset: f64,
}

/// Obstacle process `S_t = d(t) + s(t, w, counts)` with a piecewise-constant
/// deterministic part `d` and an optional stochastic part `s`.
///
/// Breakpoints of `d` are predictable jump times and are declared
/// automatically. Extra entries of `declared_jumps` add a left offset at a
/// grid time (or declare a time with zero offset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub deterministic: Piecewise,
    #[serde(default)]
    pub stochastic: Option<Expr>,
    #[serde(default)]
    pub declared_jumps: Vec<DeclaredJump>,
}

impl BarrierSpec {
    pub fn constant(c: f64) -> Self {
        Self { deterministic: Piecewise::constant(c), stochastic: None, declared_jumps: Vec::new() }
    }

    pub fn deterministic(p: Piecewise) -> Self {
        Self { deterministic: p, stochastic: None, declared_jumps: Vec::new() }
    }

    pub fn stochastic(offset: f64, expr: Expr) -> Self {
        Self { deterministic: Piecewise::constant(offset), stochastic: Some(expr), declared_jumps: Vec::new() }
    }
}

/// Left values of a barrier at one declared predictable jump level.
///
/// `S_{t_k-}` is measurable with respect to `F_{t_{k-1}}`, so the table has one
/// entry per node of level `k - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftValues {
    pub level: usize,
    pub values: Vec<f64>,
}

/// A barrier evaluated on a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedBarrier {
    pub values: Adapted,
    /// Sorted by level, at most one entry per level, levels in `1..=N`.
    pub jumps: Vec<LeftValues>,
}

impl EvaluatedBarrier {
    /// A barrier without declared predictable jumps.
    pub fn continuous(values: Adapted) -> Self {
        Self { values, jumps: Vec::new() }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self::continuous(Adapted::constant(tree, c))
    }

    pub fn left_at(&self, level: usize) -> Option<&[f64]> {
        self.jumps.iter().find(|j| j.level == level).map(|j| j.values.as_slice())
    }

    /// Left value table at `level`, falling back to the previous slot's value
    /// when no jump is declared there.
    pub fn left_or_previous(&self, level: usize) -> &[f64] {
        self.left_at(level).unwrap_or_else(|| self.values.level(level - 1))
    }

    pub fn declared_levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.jumps.iter().map(|j| j.level)
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.values.get(node)
    }
}

fn grid_level(tree: &ScenarioTree, t: f64) -> Result<usize> {
    let x = t * tree.steps() as f64;
    let k = x.round();
    if (x - k).abs() > GRID_EPS * tree.steps() as f64 || !(0.0..=tree.steps() as f64).contains(&k) {
        return Err(Error::JumpTimeOffGrid(t));
    }
    Ok(k as usize)
}

pub fn eval_barrier(spec: &BarrierSpec, tree: &ScenarioTree) -> Result<EvaluatedBarrier> {
    spec.deterministic.validate()?;
    if let Some(s) = &spec.stochastic {
        s.validate(tree.num_marks())?;
    }
    let stoch = |node: NodeId| spec.stochastic.as_ref().map_or(0.0, |s| s.eval(tree, node));
    let values = Adapted::from_fn(tree, |node| spec.deterministic.value(tree.time(node.level)) + stoch(node));
    if let Some((node, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("barrier is not finite at {node:?}")));
    }

    let mut offsets: std::collections::BTreeMap<usize, f64> = Default::default();
    for b in &spec.deterministic.breaks {
        let k = grid_level(tree, b.time)?;
        if k > 0 {
            offsets.entry(k).or_insert(0.0);
        }
    }
    for d in &spec.declared_jumps {
        let k = grid_level(tree, d.time)?;
        if k == 0 {
            return Err(Error::InvalidInput("a predictable jump cannot be declared at t = 0".into()));
        }
        *offsets.entry(k).or_insert(0.0) += d.left_offset;
    }

    let jumps = offsets
        .into_iter()
        .map(|(k, offset)| {
            let left = spec.deterministic.left_value(tree.time(k));
            LeftValues { level: k, values: tree.nodes(k - 1).map(|p| left + stoch(p) + offset).collect() }
        })
        .collect();
    Ok(EvaluatedBarrier { values, jumps })
}

/// Driver description: `f(t, y, z, v) = g(t) + a y + b z + c sum_i v_i lambda_i`,
/// optionally plus the penalty `n (y - S_t)^-`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    pub g: Piecewise,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub penalty: Option<f64>,
}

impl Default for DriverSpec {
    fn default() -> Self {
        Self { g: Piecewise::constant(0.0), a: 0.0, b: 0.0, c: 0.0, penalty: None }
    }
}

impl DriverSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        if ![self.a, self.b, self.c].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("driver coefficients must be finite".into()));
        }
        if let Some(n) = self.penalty {
            if !(n.is_finite() && n >= 0.0) {
                return Err(Error::InvalidInput("penalty level must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// `C_f = |a| + |b| + |c| sqrt(sum_i lambda_i)` (penalty excluded).
    pub fn lipschitz(&self, intensities: &[f64]) -> f64 {
        lipschitz(self.a, self.b, self.c, intensities)
    }

    pub fn eval(&self, t: f64, y: f64, z: f64, v: &[f64], intensities: &[f64], barrier: Option<f64>) -> f64 {
        let lin = self.g.value(t) + self.a * y + self.b * z + self.c * jump_integral(v, intensities);
        lin + penalty_term(self.penalty, y, barrier)
    }

    pub fn bind(&self, tree: &ScenarioTree) -> Result<Driver> {
        self.validate()?;
        Ok(Driver {
            base: BaseTerm::Grid((0..tree.steps()).map(|k| self.g.value(tree.time(k))).collect()),
            a: self.a,
            b: self.b,
            c: self.c,
            intensities: tree.intensities().to_vec(),
            penalty: self.penalty,
        })
    }
}

pub fn lipschitz(a: f64, b: f64, c: f64, intensities: &[f64]) -> f64 {
    a.abs() + b.abs() + c.abs() * intensities.iter().sum::<f64>().sqrt()
}

/// `sum_i v_i lambda_i`, the integral of `v` against the Levy measure.
pub fn jump_integral(v: &[f64], intensities: &[f64]) -> f64 {
    v.iter().zip(intensities).map(|(v, l)| v * l).sum()
}

/// The `L^2(lambda)` norm `(sum_i v_i^2 lambda_i)^{1/2}`.
pub fn jump_norm(v: &[f64], intensities: &[f64]) -> f64 {
    v.iter().zip(intensities).map(|(v, l)| v * v * l).sum::<f64>().sqrt()
}

/// `n (y - S)^-` with `x^- = max(0, -x)`; zero without penalty or barrier.
pub fn penalty_term(n: Option<f64>, y: f64, barrier: Option<f64>) -> f64 {
    match (n, barrier) {
        (Some(n), Some(s)) => n * (s - y).max(0.0),
        _ => 0.0,
    }
}

/// The `g` part of a driver as seen by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseTerm {
    /// Deterministic, one value per grid time `t_0 .. t_{N-1}`.
    Grid(Vec<f64>),
    /// Random, one value per non-leaf node (frozen inputs of a Picard step).
    Nodes(Predictable),
}

impl BaseTerm {
    pub fn at(&self, node: NodeId) -> f64 {
        match self {
            BaseTerm::Grid(g) => g[node.level],
            BaseTerm::Nodes(p) => p.get(node),
        }
    }
}

/// A driver bound to a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Driver {
    pub base: BaseTerm,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub intensities: Vec<f64>,
    pub penalty: Option<f64>,
}

impl Driver {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Self::from_grid(tree, vec![0.0; tree.steps()])
    }

    /// Coefficient-free driver `f = g(t_k)`.
    pub fn from_grid(tree: &ScenarioTree, g: Vec<f64>) -> Self {
        assert_eq!(g.len(), tree.steps());
        Self { base: BaseTerm::Grid(g), a: 0.0, b: 0.0, c: 0.0, intensities: tree.intensities().to_vec(), penalty: None }
    }

    /// Coefficient-free driver with a random `g` per node.
    pub fn from_nodes(tree: &ScenarioTree, g: Predictable) -> Self {
        Self { base: BaseTerm::Nodes(g), a: 0.0, b: 0.0, c: 0.0, intensities: tree.intensities().to_vec(), penalty: None }
    }

    pub fn with_linear(mut self, a: f64, b: f64, c: f64) -> Self {
        self.a = a;
        self.b = b;
        self.c = c;
        self
    }

    pub fn with_penalty(mut self, n: f64) -> Self {
        self.penalty = Some(n);
        self
    }

    pub fn without_penalty(&self) -> Self {
        Self { penalty: None, ..self.clone() }
    }

    pub fn lipschitz(&self) -> f64 {
        lipschitz(self.a, self.b, self.c, &self.intensities)
    }

    /// True when `f` does not depend on `(y, z, v)`.
    pub fn is_coefficient_free(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0 && self.penalty.is_none()
    }

    pub fn base_at(&self, node: NodeId) -> f64 {
        self.base.at(node)
    }

    /// `f(t_k, y, z, v)` at a non-leaf node, `barrier` feeding the penalty term.
    pub fn eval(&self, node: NodeId, y: f64, z: f64, v: &[f64], barrier: Option<f64>) -> f64 {
        self.linear_part(node, z, v) + self.a * y + penalty_term(self.penalty, y, barrier)
    }

    /// `g + b z + c sum v lambda`: everything but the `y` terms.
    pub fn linear_part(&self, node: NodeId, z: f64, v: &[f64]) -> f64 {
        self.base.at(node) + self.b * z + self.c * jump_integral(v, &self.intensities)
    }
}

/// One-barrier problem evaluated on a tree.
#[derive(Debug, Clone)]
pub struct OneBarrierProblem {
    pub driver: Driver,
    /// `xi` on the leaves.
    pub terminal: Vec<f64>,
    pub barrier: EvaluatedBarrier,
}

/// Two-barrier problem evaluated on a tree.
#[derive(Debug, Clone)]
pub struct TwoBarrierProblem {
    pub driver: Driver,
    pub terminal: Vec<f64>,
    pub lower: EvaluatedBarrier,
    pub upper: EvaluatedBarrier,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_tree::{build_tree, MarkSet};
    use rand::{Rng, SeedableRng};

    #[test]
    fn counterexample_barrier() {
        let tree = build_tree(4, MarkSet::empty()).unwrap();
        let spec = BarrierSpec::deterministic(Piecewise::step(1.0, 0.5, 0.0));
        let b = eval_barrier(&spec, &tree).unwrap();
        let per_level: Vec<f64> = (0..=4).map(|k| b.values.level(k)[0]).collect();
        assert_eq!(per_level, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.jumps.len(), 1);
        assert_eq!(b.jumps[0].level, 2);
        assert!(b.jumps[0].values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_and_stochastic_barrier() {
        let tree = build_tree(2, MarkSet::empty()).unwrap();
        let b = eval_barrier(&BarrierSpec::constant(-10.0), &tree).unwrap();
        assert!(b.values.iter().all(|(_, v)| v == -10.0));
        assert!(b.jumps.is_empty());

        let s = eval_barrier(&BarrierSpec::stochastic(0.0, Expr::W), &tree).unwrap();
        let h = 0.5f64.sqrt();
        assert_eq!(s.values.level(1), &[h, -h]);
        let leaves = s.values.level(2);
        assert!((leaves[0] - 2.0 * h).abs() < 1e-15 && leaves[1].abs() < 1e-15 && leaves[2].abs() < 1e-15);
    }

    #[test]
    fn off_grid_jump() {
        let tree = build_tree(4, MarkSet::empty()).unwrap();
        let spec = BarrierSpec::deterministic(Piecewise::step(1.0, 0.3, 0.0));
        assert_eq!(eval_barrier(&spec, &tree), Err(Error::JumpTimeOffGrid(0.3)));
        let mut spec = BarrierSpec::constant(0.0);
        spec.declared_jumps.push(DeclaredJump { time: 0.6, left_offset: 0.1 });
        assert!(matches!(eval_barrier(&spec, &tree), Err(Error::JumpTimeOffGrid(_))));
    }

    #[test]
    fn declared_offsets_and_right_continuity() {
        let tree = build_tree(4, MarkSet::empty()).unwrap();
        let spec = BarrierSpec {
            deterministic: Piecewise { initial: 2.0, breaks: vec![Breakpoint { time: 0.25, value: 1.0 }] },
            stochastic: Some(Expr::W),
            declared_jumps: vec![DeclaredJump { time: 0.75, left_offset: 0.5 }],
        };
        let b = eval_barrier(&spec, &tree).unwrap();
        assert_eq!(b.declared_levels().collect::<Vec<_>>(), vec![1, 3]);
        // right-continuous: value at the breakpoint is the new piece
        assert_eq!(b.values.level(1), &[1.5, 0.5]);
        assert_eq!(b.left_at(1).unwrap(), &[2.0]);
        let l3 = b.left_at(3).unwrap();
        for (i, p) in tree.nodes(2).enumerate() {
            assert!((l3[i] - (1.0 + tree.w(p) + 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn driver_evaluation() {
        let zero = DriverSpec::zero();
        assert_eq!(zero.eval(0.3, 1.0, 2.0, &[], &[], None), 0.0);

        let pen = DriverSpec { penalty: Some(3.0), ..DriverSpec::zero() };
        assert!((pen.eval(0.0, 0.4, 0.0, &[], &[], Some(1.0)) - 1.8).abs() < 1e-15);

        let lin = DriverSpec { a: 1.0, b: 2.0, c: 1.0, ..DriverSpec::zero() };
        assert_eq!(lin.eval(0.0, 1.0, 1.0, &[2.0], &[0.5], None), 4.0);
        assert!((lin.lipschitz(&[0.5]) - (3.0 + 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn driver_is_lipschitz() {
        let lambdas = [0.5, 1.5];
        let spec = DriverSpec { g: Piecewise::step(0.3, 0.5, -1.0), a: -0.7, b: 1.3, c: 0.9, penalty: None };
        let cf = spec.lipschitz(&lambdas);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let t = rng.gen::<f64>();
            let mut draw = || rng.gen_range(-5.0..5.0);
            let (y, z, v) = (draw(), draw(), [draw(), draw()]);
            let (y2, z2, v2) = (draw(), draw(), [draw(), draw()]);
            let lhs = (spec.eval(t, y, z, &v, &lambdas, None) - spec.eval(t, y2, z2, &v2, &lambdas, None)).abs();
            let dv = [v[0] - v2[0], v[1] - v2[1]];
            let rhs = cf * ((y - y2).abs() + (z - z2).abs() + jump_norm(&dv, &lambdas));
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn expressions() {
        let marks = MarkSet::from_pairs(&[(2.0, 0.5)]).unwrap();
        let tree = build_tree(2, marks).unwrap();
        let leaf = NodeId::new(2, 15); // two mark jumps, both down
        assert_eq!(Expr::JumpSum.eval(&tree, leaf), 4.0);
        assert_eq!(Expr::CompensatedCount(0).eval(&tree, leaf), 1.5);
        let put = Expr::PositivePart(Box::new(Expr::Sum(vec![Expr::Const(1.0), Expr::Scale { factor: -1.0, of: Box::new(Expr::W) }])));
        assert!((put.eval(&tree, leaf) - (1.0 + 2.0 * 0.5f64.sqrt())).abs() < 1e-15);
        assert!(Expr::Count(1).validate(1).is_err());
    }

    #[test]
    fn path_integral_and_expectations() {
        let tree = build_tree(3, MarkSet::empty()).unwrap();
        let p = path_integral(&tree, |n| n.level as f64);
        assert!((p.level(3)[0] - (0.0 + 1.0 + 2.0) / 3.0).abs() < 1e-15);
        let w = conditional_expectations(&tree, tree.w_level(3));
        for k in 0..=3 {
            for (i, &v) in w.level(k).iter().enumerate() {
                assert!((v - tree.w_level(k)[i]).abs() < 1e-14);
            }
        }
    }
}

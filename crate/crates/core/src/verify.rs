//! Clause-by-clause checks of candidate solutions, fault injection for the
//! checks themselves, and multi-route probes of uniqueness and regularity.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::bsde::project_zv;
use crate::error::{Error, Result};
use crate::fixpoint::{picard_solve, FixpointOptions, Obstacles, Triple};
use crate::penalization::{default_ladder, solve_penalized, sweep};
use crate::process_model::{Adapted, Driver, EvaluatedBarrier, OneBarrierProblem, TwoBarrierProblem};
use crate::reflected_one::{solve_reflected_one, solve_via_snell};
use crate::reflected_two::{picard_snell_solve, solve_double_obstacle, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::scenario_tree::{NodeId, ScenarioTree};
use crate::solution::{increments, jump_part, Side, SolutionQuadruple, SolutionQuintuple};

/// Residual bound for a passing clause.
pub const CHECK_TOL: f64 = 1e-10;
/// Complementarity `dK^+ dK^- = 0` is asserted where `U - L` exceeds this many steps.
pub const SEPARATION_STEPS: f64 = 10.0;
/// `n dt` used by the penalization route of the uniqueness probe.
pub const PENALIZATION_ROUTE_NDT: f64 = 1e13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    Dynamics,
    Barrier,
    Skorokhod,
    JumpFormula,
    Compensator,
    LeftLimit,
    NoSimultaneousJump,
}

impl Clause {
    pub const ONE_BARRIER: [Clause; 6] =
        [Clause::Dynamics, Clause::Barrier, Clause::Skorokhod, Clause::JumpFormula, Clause::Compensator, Clause::LeftLimit];
    pub const TWO_BARRIERS: [Clause; 7] = [
        Clause::Dynamics,
        Clause::Barrier,
        Clause::Skorokhod,
        Clause::JumpFormula,
        Clause::Compensator,
        Clause::LeftLimit,
        Clause::NoSimultaneousJump,
    ];

    pub fn letter(self) -> char {
        match self {
            Clause::Dynamics => 'a',
            Clause::Barrier => 'b',
            Clause::Skorokhod => 'c',
            Clause::JumpFormula => 'd',
            Clause::Compensator => 'e',
            Clause::LeftLimit => 'f',
            Clause::NoSimultaneousJump => 'g',
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Clause::Dynamics => "Y_N = xi, one-step dynamics identity, Z and V equal the projection of Y_next",
            Clause::Barrier => "barrier containment",
            Clause::Skorokhod => "(Y - barrier) dK^c = 0",
            Clause::JumpFormula => "dK^d follows the predictable-jump formula at declared times and vanishes elsewhere",
            Clause::Compensator => "K_0 = 0, K nondecreasing and predictable, K = K^c + K^d",
            Clause::LeftLimit => "(Y_- - barrier_-) dK = 0 at declared jump times",
            Clause::NoSimultaneousJump => "no simultaneous jumps of K^{+d} and K^{-d}; dK^+ dK^- = 0 where barriers are apart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: Clause,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub tol: f64,
    pub clauses: Vec<ClauseResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<Clause> {
        self.clauses.iter().filter(|c| !c.passed).map(|c| c.clause).collect()
    }

    pub fn get(&self, clause: Clause) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == clause)
    }

    pub fn max_residual(&self) -> f64 {
        self.clauses.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    fn from_residuals(tol: f64, parts: Vec<(Clause, Worst)>) -> Self {
        let clauses = parts
            .into_iter()
            .map(|(clause, w)| ClauseResult {
                clause,
                passed: w.value <= tol,
                residual: w.value,
                detail: w.at.map_or_else(String::new, |n| format!("worst at level {} index {}", n.level, n.index)),
            })
            .collect();
        Self { tol, clauses }
    }

    fn shape_failure(tol: f64, clauses: &[Clause], why: String) -> Self {
        let clauses = clauses
            .iter()
            .map(|&clause| ClauseResult { clause, passed: false, residual: f64::INFINITY, detail: why.clone() })
            .collect();
        Self { tol, clauses }
    }
}

/// Running maximum with its location.
#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    value: f64,
    at: Option<NodeId>,
}

impl Worst {
    fn add(&mut self, value: f64, at: NodeId) {
        let v = if value.is_nan() { f64::INFINITY } else { value.abs() };
        if v > self.value || self.at.is_none() && v > 0.0 {
            self.value = v;
            self.at = Some(at);
        }
    }
}

fn non_leaf(tree: &ScenarioTree) -> impl Iterator<Item = NodeId> + '_ {
    (0..tree.steps()).flat_map(move |k| tree.nodes(k))
}

fn shape_problem(tree: &ScenarioTree, y: &Adapted, z: &crate::process_model::Predictable, v: &crate::process_model::PredictableMarks, ks: &[&Adapted]) -> Option<String> {
    let n = tree.steps();
    let adapted_ok = |a: &Adapted| a.levels().len() == n + 1 && (0..=n).all(|k| a.level(k).len() == tree.level_width(k));
    if !adapted_ok(y) || ks.iter().any(|k| !adapted_ok(k)) {
        return Some("adapted process does not match the tree".into());
    }
    if z.levels().len() != n || (0..n).any(|k| z.level(k).len() != tree.level_width(k)) {
        return Some("Z does not match the tree".into());
    }
    let m = tree.num_marks();
    if v.num_marks() != m || v.levels().len() != n || (0..n).any(|k| v.levels()[k].len() != tree.level_width(k) * m) {
        return Some("V does not match the tree".into());
    }
    None
}

/// Non-predictability of a cumulative process: spread of `K_{k+1}` over the
/// children of each node.
fn predictability_defect(tree: &ScenarioTree, k: &Adapted, worst: &mut Worst) {
    let b = tree.branching();
    for node in non_leaf(tree) {
        let ch = &k.level(node.level + 1)[node.index * b..(node.index + 1) * b];
        for c in ch {
            worst.add(c - ch[0], node);
        }
    }
}

fn dynamics(tree: &ScenarioTree, driver: &Driver, terminal: &[f64], y: &Adapted, z: &crate::process_model::Predictable, v: &crate::process_model::PredictableMarks, net: impl Fn(NodeId) -> f64) -> Worst {
    let n = tree.steps();
    let b = tree.branching();
    let mut w = Worst::default();
    for (i, xi) in terminal.iter().enumerate() {
        w.add(y.level(n)[i] - xi, NodeId::new(n, i));
    }
    let driver = driver.without_penalty();
    for node in non_leaf(tree) {
        let next = &y.level(node.level + 1)[node.index * b..(node.index + 1) * b];
        let p = project_zv(tree, next);
        let yk = y.get(node);
        let f = driver.eval(node, yk, z.get(node), v.get(node), None);
        w.add(yk - p.mean - f * tree.dt() - net(node), node);
        w.add(z.get(node) - p.z, node);
        for (a, b) in v.get(node).iter().zip(&p.v) {
            w.add(a - b, node);
        }
    }
    w
}

/// One side of a reflected solution, as seen by the clause checks.
struct SideView<'a> {
    side: Side,
    barrier: &'a EvaluatedBarrier,
    k: &'a Adapted,
    k_c: &'a Adapted,
    k_d: &'a Adapted,
}

impl SideView<'_> {
    /// Signed distance from the barrier, nonnegative when feasible.
    fn room(&self, y: f64, s: f64) -> f64 {
        match self.side {
            Side::Lower => y - s,
            Side::Upper => s - y,
        }
    }

    fn containment(&self, y: &Adapted, w: &mut Worst) {
        for (node, yk) in y.iter() {
            w.add(self.room(yk, self.barrier.get(node)).min(0.0), node);
        }
    }

    fn skorokhod(&self, tree: &ScenarioTree, y: &Adapted, w: &mut Worst) {
        let inc = increments(tree, self.k_c);
        for node in non_leaf(tree) {
            w.add(self.room(y.get(node), self.barrier.get(node)) * inc.get(node), node);
        }
    }

    fn jump_formula(&self, tree: &ScenarioTree, y: &Adapted, w: &mut Worst) {
        let inc = increments(tree, self.k);
        let inc_d = increments(tree, self.k_d);
        for k in 0..tree.steps() {
            let left = self.barrier.left_at(k + 1);
            let means = left.map(|_| tree.expect_level(y.level(k + 1)));
            for node in tree.nodes(k) {
                let expected = match (left, &means) {
                    (Some(l), Some(m)) => jump_part(self.side, inc.get(node), y.get(node), l[node.index], m[node.index]),
                    _ => 0.0,
                };
                w.add(inc_d.get(node) - expected, node);
            }
        }
    }

    fn compensator(&self, tree: &ScenarioTree, w: &mut Worst) {
        for k in [self.k, self.k_c, self.k_d] {
            w.add(k.get(NodeId::ROOT), NodeId::ROOT);
            let inc = increments(tree, k);
            for node in non_leaf(tree) {
                w.add(inc.get(node).min(0.0), node);
            }
            predictability_defect(tree, k, w);
        }
        for (node, total) in self.k.iter() {
            w.add(total - self.k_c.get(node) - self.k_d.get(node), node);
        }
    }

    fn left_limit(&self, tree: &ScenarioTree, y: &Adapted, w: &mut Worst) {
        let inc = increments(tree, self.k);
        for jump in &self.barrier.jumps {
            for node in tree.nodes(jump.level - 1) {
                w.add(self.room(y.get(node), jump.values[node.index]) * inc.get(node), node);
            }
        }
    }
}

/// Checks a one-barrier solution clause by clause.
pub fn check_solution_one(tree: &ScenarioTree, sol: &SolutionQuadruple, problem: &OneBarrierProblem, tol: f64) -> CheckReport {
    if let Some(why) = shape_problem(tree, &sol.y, &sol.z, &sol.v, &[&sol.k, &sol.k_c, &sol.k_d]) {
        return CheckReport::shape_failure(tol, &Clause::ONE_BARRIER, why);
    }
    if problem.terminal.len() != tree.leaf_count() {
        return CheckReport::shape_failure(tol, &Clause::ONE_BARRIER, "terminal does not match the tree".into());
    }
    let view = SideView { side: Side::Lower, barrier: &problem.barrier, k: &sol.k, k_c: &sol.k_c, k_d: &sol.k_d };
    let inc = increments(tree, &sol.k);
    let a = dynamics(tree, &problem.driver, &problem.terminal, &sol.y, &sol.z, &sol.v, |n| inc.get(n));
    let mut b = Worst::default();
    view.containment(&sol.y, &mut b);
    let mut c = Worst::default();
    view.skorokhod(tree, &sol.y, &mut c);
    let mut d = Worst::default();
    view.jump_formula(tree, &sol.y, &mut d);
    let mut e = Worst::default();
    view.compensator(tree, &mut e);
    let mut f = Worst::default();
    view.left_limit(tree, &sol.y, &mut f);
    CheckReport::from_residuals(
        tol,
        vec![
            (Clause::Dynamics, a),
            (Clause::Barrier, b),
            (Clause::Skorokhod, c),
            (Clause::JumpFormula, d),
            (Clause::Compensator, e),
            (Clause::LeftLimit, f),
        ],
    )
}

/// Checks a two-barrier solution clause by clause.
pub fn check_solution_two(tree: &ScenarioTree, sol: &SolutionQuintuple, problem: &TwoBarrierProblem, tol: f64) -> CheckReport {
    let ks = [&sol.k_plus, &sol.k_plus_c, &sol.k_plus_d, &sol.k_minus, &sol.k_minus_c, &sol.k_minus_d];
    if let Some(why) = shape_problem(tree, &sol.y, &sol.z, &sol.v, &ks) {
        return CheckReport::shape_failure(tol, &Clause::TWO_BARRIERS, why);
    }
    if problem.terminal.len() != tree.leaf_count() {
        return CheckReport::shape_failure(tol, &Clause::TWO_BARRIERS, "terminal does not match the tree".into());
    }
    let lower = SideView { side: Side::Lower, barrier: &problem.lower, k: &sol.k_plus, k_c: &sol.k_plus_c, k_d: &sol.k_plus_d };
    let upper = SideView { side: Side::Upper, barrier: &problem.upper, k: &sol.k_minus, k_c: &sol.k_minus_c, k_d: &sol.k_minus_d };
    let inc_p = increments(tree, &sol.k_plus);
    let inc_m = increments(tree, &sol.k_minus);
    let a = dynamics(tree, &problem.driver, &problem.terminal, &sol.y, &sol.z, &sol.v, |n| inc_p.get(n) - inc_m.get(n));
    let mut parts: Vec<(Clause, Worst)> = vec![(Clause::Dynamics, a)];
    let mut b = Worst::default();
    let mut c = Worst::default();
    let mut d = Worst::default();
    let mut e = Worst::default();
    let mut f = Worst::default();
    for view in [&lower, &upper] {
        view.containment(&sol.y, &mut b);
        view.skorokhod(tree, &sol.y, &mut c);
        view.jump_formula(tree, &sol.y, &mut d);
        view.compensator(tree, &mut e);
        view.left_limit(tree, &sol.y, &mut f);
    }
    parts.extend([(Clause::Barrier, b), (Clause::Skorokhod, c), (Clause::JumpFormula, d), (Clause::Compensator, e), (Clause::LeftLimit, f)]);

    let mut g = Worst::default();
    let inc_pd = increments(tree, &sol.k_plus_d);
    let inc_md = increments(tree, &sol.k_minus_d);
    let mut levels: Vec<usize> = problem.lower.declared_levels().chain(problem.upper.declared_levels()).collect();
    levels.sort_unstable();
    levels.dedup();
    for k in levels {
        let (l, u) = (problem.lower.left_or_previous(k), problem.upper.left_or_previous(k));
        for node in tree.nodes(k - 1) {
            if l[node.index] < u[node.index] {
                g.add(inc_pd.get(node).min(inc_md.get(node)).max(0.0), node);
            }
        }
    }
    for node in non_leaf(tree) {
        if problem.upper.get(node) - problem.lower.get(node) > SEPARATION_STEPS * tree.dt() {
            g.add(inc_p.get(node).min(inc_m.get(node)).max(0.0), node);
        }
    }
    parts.push((Clause::NoSimultaneousJump, g));
    CheckReport::from_residuals(tol, parts)
}

/// Adds `delta` to `x` on every strict descendant of `node`.
fn add_below(tree: &ScenarioTree, x: &mut Adapted, node: NodeId, delta: f64) {
    let b = tree.branching();
    let mut span = 1;
    for level in node.level + 1..=tree.steps() {
        span *= b;
        for v in &mut x.level_mut(level)[node.index * span..(node.index + 1) * span] {
            *v += delta;
        }
    }
}

/// Size of the tampering applied by the mutants.
const FAULT: f64 = 0.1;

/// Moves predictable-jump mass `amount` below `node` into the continuous part.
fn reclassify(tree: &ScenarioTree, k_c: &mut Adapted, k_d: &mut Adapted, node: NodeId, amount: f64) {
    add_below(tree, k_c, node, amount);
    add_below(tree, k_d, node, -amount);
}

/// Parents at declared levels carrying predictable-jump mass while sitting
/// exactly on the barrier's current value.
fn jump_sites(tree: &ScenarioTree, y: &Adapted, barrier: &EvaluatedBarrier, k_d: &Adapted) -> Vec<(usize, NodeId, f64)> {
    let inc_d = increments(tree, k_d);
    barrier
        .declared_levels()
        .flat_map(|k| tree.nodes(k - 1).map(move |n| (k, n)))
        .filter_map(|(k, n)| {
            let m = inc_d.get(n);
            (m > CHECK_TOL && (y.get(n) - barrier.get(n)).abs() * 2.0 * m <= CHECK_TOL * 1e-2).then_some((k, n, m))
        })
        .collect()
}

/// Tampers with a one-barrier solution (and, for some clauses, the problem) so
/// that exactly `clause` should fail. `None` when the solution has no suitable site.
pub fn inject_fault_one(
    tree: &ScenarioTree,
    sol: &SolutionQuadruple,
    problem: &OneBarrierProblem,
    clause: Clause,
) -> Option<(SolutionQuadruple, OneBarrierProblem)> {
    let mut s = sol.clone();
    let mut p = problem.clone();
    match clause {
        Clause::Dynamics => s.z.set(NodeId::ROOT, s.z.get(NodeId::ROOT) + FAULT),
        Clause::Barrier => {
            let leaf = NodeId::new(tree.steps(), 0);
            p.barrier.values.set(leaf, s.y.get(leaf) + FAULT);
        }
        Clause::Skorokhod => {
            if p.barrier.left_at(1).is_some() {
                return None;
            }
            let shift = FAULT * (1.0 - problem.driver.a * tree.dt());
            s.y.set(NodeId::ROOT, s.y.get(NodeId::ROOT) + FAULT);
            add_below(tree, &mut s.k, NodeId::ROOT, shift);
            add_below(tree, &mut s.k_c, NodeId::ROOT, shift);
        }
        Clause::JumpFormula => {
            let (_, node, m) = *jump_sites(tree, &s.y, &p.barrier, &s.k_d).first()?;
            reclassify(tree, &mut s.k_c, &mut s.k_d, node, 0.5 * m);
        }
        Clause::Compensator => {
            s.k = s.k.map(|x| x + FAULT);
            s.k_c = s.k_c.map(|x| x + FAULT);
        }
        Clause::LeftLimit => {
            let sites = jump_sites(tree, &s.y, &p.barrier, &s.k_d);
            let level = sites.first()?.0;
            for &(_, node, m) in sites.iter().filter(|s| s.0 == level) {
                reclassify(tree, &mut s.k_c, &mut s.k_d, node, m);
            }
            if increments(tree, &s.k_d).level(level - 1).iter().any(|d| *d != 0.0) {
                return None;
            }
            let jump = p.barrier.jumps.iter_mut().find(|j| j.level == level)?;
            for (i, v) in jump.values.iter_mut().enumerate() {
                *v = s.y.level(level - 1)[i] + 3.0 * FAULT;
            }
        }
        Clause::NoSimultaneousJump => return None,
    }
    Some((s, p))
}

/// Two-barrier counterpart of [`inject_fault_one`]. The no-simultaneous-jump
/// clause is implied by the Skorokhod and jump-formula clauses whenever the
/// barriers are apart, so it has no isolated mutant and yields `None`.
pub fn inject_fault_two(
    tree: &ScenarioTree,
    sol: &SolutionQuintuple,
    problem: &TwoBarrierProblem,
    clause: Clause,
) -> Option<(SolutionQuintuple, TwoBarrierProblem)> {
    let mut s = sol.clone();
    let mut p = problem.clone();
    match clause {
        Clause::Dynamics => s.z.set(NodeId::ROOT, s.z.get(NodeId::ROOT) + FAULT),
        Clause::Barrier => {
            let leaf = NodeId::new(tree.steps(), 0);
            p.lower.values.set(leaf, s.y.get(leaf) + FAULT);
        }
        Clause::Skorokhod => {
            if p.lower.left_at(1).is_some() || p.upper.left_at(1).is_some() {
                return None;
            }
            let root = NodeId::ROOT;
            let (y, l, u) = (s.y.get(root), p.lower.get(root), p.upper.get(root));
            let delta = FAULT.min(0.5 * (u - l));
            let shift = delta * (1.0 - problem.driver.a * tree.dt());
            if u - y >= y - l {
                s.y.set(root, y + delta);
                add_below(tree, &mut s.k_plus, root, shift);
                add_below(tree, &mut s.k_plus_c, root, shift);
            } else {
                s.y.set(root, y - delta);
                add_below(tree, &mut s.k_minus, root, shift);
                add_below(tree, &mut s.k_minus_c, root, shift);
            }
        }
        Clause::JumpFormula => {
            if let Some(&(_, node, m)) = jump_sites(tree, &s.y, &p.lower, &s.k_plus_d).first() {
                reclassify(tree, &mut s.k_plus_c, &mut s.k_plus_d, node, 0.5 * m);
            } else {
                let (_, node, m) = *jump_sites(tree, &s.y, &p.upper, &s.k_minus_d).first()?;
                reclassify(tree, &mut s.k_minus_c, &mut s.k_minus_d, node, 0.5 * m);
            }
        }
        Clause::Compensator => {
            s.k_plus = s.k_plus.map(|x| x + FAULT);
            s.k_plus_c = s.k_plus_c.map(|x| x + FAULT);
        }
        Clause::LeftLimit => {
            let lower_sites = jump_sites(tree, &s.y, &p.lower, &s.k_plus_d);
            let (sites, barrier, k_c, k_d, sign) = if !lower_sites.is_empty() {
                (lower_sites, &mut p.lower, &mut s.k_plus_c, &mut s.k_plus_d, 1.0)
            } else {
                let upper_sites = jump_sites(tree, &s.y, &p.upper, &s.k_minus_d);
                (upper_sites, &mut p.upper, &mut s.k_minus_c, &mut s.k_minus_d, -1.0)
            };
            let level = sites.first()?.0;
            for &(_, node, m) in sites.iter().filter(|s| s.0 == level) {
                reclassify(tree, k_c, k_d, node, m);
            }
            if increments(tree, k_d).level(level - 1).iter().any(|d| *d != 0.0) {
                return None;
            }
            let jump = barrier.jumps.iter_mut().find(|j| j.level == level)?;
            for (i, v) in jump.values.iter_mut().enumerate() {
                *v = s.y.level(level - 1)[i] + sign * 3.0 * FAULT;
            }
        }
        Clause::NoSimultaneousJump => return None,
    }
    Some((s, p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub routes: Vec<String>,
    pub root_values: Vec<f64>,
    /// Largest pairwise sup-distance between the `Y` of different routes.
    pub max_deviation: f64,
}

fn max_pairwise(ys: &[Adapted]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in ys.iter().enumerate() {
        for b in &ys[i + 1..] {
            worst = worst.max(a.max_abs_diff(b));
        }
    }
    worst
}

fn report(routes: Vec<(String, Adapted)>) -> UniquenessReport {
    let ys: Vec<Adapted> = routes.iter().map(|(_, y)| y.clone()).collect();
    UniquenessReport {
        root_values: ys.iter().map(|y| y.get(NodeId::ROOT)).collect(),
        routes: routes.into_iter().map(|(r, _)| r).collect(),
        max_deviation: max_pairwise(&ys),
    }
}

fn random_starts(tree: &ScenarioTree, n_restarts: usize, seed: u64) -> Vec<Triple> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n_restarts).map(|_| Triple::random(tree, &mut rng, 1.0)).collect()
}

/// Solves a one-barrier problem by direct induction, by heavy penalization,
/// through the Snell envelope (coefficient-free drivers) and by the Picard
/// iteration from `n_restarts` random starts.
pub fn uniqueness_probe_one(tree: &ScenarioTree, problem: &OneBarrierProblem, n_restarts: usize, seed: u64) -> Result<UniquenessReport> {
    if n_restarts < 2 {
        return Err(Error::InvalidInput("the uniqueness probe needs at least two restarts".into()));
    }
    let mut routes = vec![("direct".to_string(), solve_reflected_one(tree, problem)?.y)];
    let n = PENALIZATION_ROUTE_NDT / tree.dt();
    routes.push(("penalization".into(), solve_penalized(tree, problem, n)?.solution.y));
    if problem.driver.is_coefficient_free() {
        routes.push(("snell".into(), solve_via_snell(tree, problem)?));
    }
    let obstacles = Obstacles::Lower(problem.barrier.clone());
    for (i, init) in random_starts(tree, n_restarts, seed).into_iter().enumerate() {
        let opts = FixpointOptions { init: Some(init), ..Default::default() };
        let (sol, _) = picard_solve(tree, &problem.driver, &problem.terminal, &obstacles, &opts)?;
        routes.push((format!("fixpoint-{i}"), sol.y().clone()));
    }
    Ok(report(routes))
}

/// Two-barrier counterpart: direct induction, the Snell-pair construction
/// (coefficient-free drivers) and the Picard iteration from random starts.
pub fn uniqueness_probe_two(tree: &ScenarioTree, problem: &TwoBarrierProblem, n_restarts: usize, seed: u64) -> Result<UniquenessReport> {
    if n_restarts < 2 {
        return Err(Error::InvalidInput("the uniqueness probe needs at least two restarts".into()));
    }
    let mut routes = vec![("direct".to_string(), solve_double_obstacle(tree, problem)?.y)];
    if problem.driver.is_coefficient_free() {
        routes.push(("snell-pair".into(), picard_snell_solve(tree, problem, None, DEFAULT_TOL, DEFAULT_MAX_ITER)?.0.y));
    }
    let obstacles = Obstacles::Both { lower: problem.lower.clone(), upper: problem.upper.clone() };
    for (i, init) in random_starts(tree, n_restarts, seed).into_iter().enumerate() {
        let opts = FixpointOptions { init: Some(init), ..Default::default() };
        let (sol, _) = picard_solve(tree, &problem.driver, &problem.terminal, &obstacles, &opts)?;
        routes.push((format!("fixpoint-{i}"), sol.y().clone()));
    }
    Ok(report(routes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `K^d = 0`: the compensator is continuous.
    ContinuousCompensator,
    /// `K^d` carries mass at declared barrier jumps.
    PredictableJump,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityProbe {
    /// `E[K^d_N]` of the reflected solution.
    pub kd_mass: f64,
    pub ladder: Vec<f64>,
    pub y_gaps: Vec<f64>,
    pub z_gaps: Vec<f64>,
    pub v_gaps: Vec<f64>,
    /// `sup |Y^n - Y|` at the slots just before declared barrier jumps.
    pub jump_slot_gaps: Vec<f64>,
    /// `sup |Y^n - Y|` is nonincreasing along the ladder and ends below where it started (or is zero).
    pub uniform_decay: bool,
    /// Every ladder entry leaves a positive gap just before a jump.
    pub persistent_jump_gap: bool,
    /// `(Z^n, V^n)` agree with `(Z, V)` at every ladder entry.
    pub zv_gaps_vanish: bool,
    pub verdict: Verdict,
    /// The verdict co-occurs with the expected gap behaviour.
    pub consistent: bool,
    /// `(Z^n, V^n)` converge although `K` jumps.
    pub zv_converge_with_jump: bool,
    pub note: String,
}

/// Tolerance separating zero from positive masses and gaps in the probe.
const PROBE_TOL: f64 = 1e-12;

pub fn regularity_probe(tree: &ScenarioTree, problem: &OneBarrierProblem, ladder: Option<&[f64]>) -> Result<RegularityProbe> {
    let ladder = ladder.map_or_else(default_ladder, <[f64]>::to_vec);
    let rep = sweep(tree, problem, &ladder, tree.steps())?;
    let kd_mass = tree.expect_terminal(&rep.limit.k_d);
    let y_gaps = rep.sup_gaps.clone();
    let all_zero = y_gaps.iter().all(|g| *g <= PROBE_TOL);
    let nonincreasing = y_gaps.windows(2).all(|w| w[1] <= w[0] + PROBE_TOL);
    let uniform_decay = all_zero || (nonincreasing && y_gaps.last() < y_gaps.first());
    let persistent_jump_gap = !rep.jump_slot_gaps.is_empty() && rep.jump_slot_gaps.iter().all(|g| *g > PROBE_TOL) && !problem.barrier.jumps.is_empty();
    let zv_gaps_vanish = rep.z_gaps.iter().chain(&rep.v_gaps).all(|g| *g <= PROBE_TOL);
    let verdict = if kd_mass > PROBE_TOL { Verdict::PredictableJump } else { Verdict::ContinuousCompensator };
    let consistent = match verdict {
        Verdict::PredictableJump => persistent_jump_gap,
        Verdict::ContinuousCompensator => uniform_decay,
    };
    Ok(RegularityProbe {
        kd_mass,
        ladder,
        z_gaps: rep.z_gaps.clone(),
        v_gaps: rep.v_gaps.clone(),
        jump_slot_gaps: rep.jump_slot_gaps.clone(),
        y_gaps,
        uniform_decay,
        persistent_jump_gap,
        zv_gaps_vanish,
        verdict,
        consistent,
        zv_converge_with_jump: verdict == Verdict::PredictableJump && zv_gaps_vanish,
        note: "left limits and the predictable projection of Y are represented by the values at the slot before each declared jump".into(),
    })
}

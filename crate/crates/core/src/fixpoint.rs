//! Picard iteration for drivers depending on `(y, z, v)`.
//!
//! Each step freezes `f(t_k, y_k, z_k, v_k)` at the previous iterate, solves
//! the resulting coefficient-free problem, and measures the change in the
//! weighted norm
//! `||(Y, Z, V)||_alpha^2 = sum_{k<N} e^{alpha t_k} E[Y_k^2 + Z_k^2 + sum_i V_{k,i}^2 lambda_i] dt`.

use rand::Rng;
use serde::Serialize;

use crate::bsde::solve_bsde;
use crate::error::{Error, Result};
use crate::process_model::{Adapted, Driver, EvaluatedBarrier, OneBarrierProblem, Predictable, PredictableMarks, TwoBarrierProblem};
use crate::reflected_one::solve_reflected_one;
use crate::reflected_two::solve_double_obstacle;
use crate::scenario_tree::ScenarioTree;
use crate::solution::{SolutionQuadruple, SolutionQuintuple};

/// Consecutive non-contracting ratios (after the first) that abort the iteration.
const NON_CONTRACTING_RUN: usize = 3;

/// `alpha = 2 C + 4 C^2 + 2`.
pub fn alpha_rule(c_f: f64) -> f64 {
    2.0 * c_f + 4.0 * c_f * c_f + 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Triple {
    pub y: Adapted,
    pub z: Predictable,
    pub v: PredictableMarks,
}

impl Triple {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        Self { y: Adapted::zeros(tree), z: Predictable::zeros(tree), v: PredictableMarks::zeros(tree) }
    }

    /// Independent uniform entries in `[-scale, scale]`.
    pub fn random(tree: &ScenarioTree, rng: &mut impl Rng, scale: f64) -> Self {
        let mut draw = || rng.gen_range(-scale..=scale);
        let y = Adapted::from_fn(tree, |_| draw());
        let z = Predictable::from_fn(tree, |_| draw());
        let mut v = PredictableMarks::zeros(tree);
        for k in 0..tree.steps() {
            for node in tree.nodes(k) {
                v.get_mut(node).iter_mut().for_each(|x| *x = draw());
            }
        }
        Self { y, z, v }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { y: self.y.map(|x| c * x), z: self.z.map(|x| c * x), v: self.v.map(|x| c * x) }
    }
}

/// Weighted norm of `a - b` (pass a zero triple as `b` for the norm itself).
pub fn alpha_distance(tree: &ScenarioTree, a: &Triple, b: &Triple, alpha: f64) -> f64 {
    let lambdas = tree.intensities();
    (0..tree.steps())
        .map(|k| {
            let sq: Vec<f64> = tree
                .nodes(k)
                .map(|n| {
                    let dv: f64 = a.v.get(n).iter().zip(b.v.get(n)).zip(lambdas).map(|((x, y), l)| (x - y).powi(2) * l).sum();
                    (a.y.get(n) - b.y.get(n)).powi(2) + (a.z.get(n) - b.z.get(n)).powi(2) + dv
                })
                .collect();
            (alpha * tree.time(k)).exp() * tree.expect_at(&sq) * tree.dt()
        })
        .sum::<f64>()
        .sqrt()
}

pub fn alpha_norm(tree: &ScenarioTree, t: &Triple, alpha: f64) -> f64 {
    alpha_distance(tree, t, &Triple::zeros(tree), alpha)
}

#[derive(Debug, Clone)]
pub enum Obstacles {
    None,
    Lower(EvaluatedBarrier),
    Both { lower: EvaluatedBarrier, upper: EvaluatedBarrier },
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixpointSolution {
    Standard(SolutionQuadruple),
    OneBarrier(SolutionQuadruple),
    TwoBarrier(SolutionQuintuple),
}

impl FixpointSolution {
    pub fn triple(&self) -> Triple {
        match self {
            Self::Standard(s) | Self::OneBarrier(s) => Triple { y: s.y.clone(), z: s.z.clone(), v: s.v.clone() },
            Self::TwoBarrier(s) => Triple { y: s.y.clone(), z: s.z.clone(), v: s.v.clone() },
        }
    }

    pub fn y(&self) -> &Adapted {
        match self {
            Self::Standard(s) | Self::OneBarrier(s) => &s.y,
            Self::TwoBarrier(s) => &s.y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixpointOptions {
    /// Weight exponent; `alpha_rule(C_f)` when `None`.
    pub alpha: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting triple; zero when `None`.
    pub init: Option<Triple>,
    pub keep_iterates: bool,
}

impl Default for FixpointOptions {
    fn default() -> Self {
        Self { alpha: None, tol: 1e-12, max_iter: 1_000, init: None, keep_iterates: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixpointTrace {
    pub alpha: f64,
    /// `d_j = ||iterate_{j+1} - iterate_j||_alpha`, iterate 0 being the start.
    pub distances: Vec<f64>,
    /// `r_j = d_{j+1} / d_j`.
    pub ratios: Vec<f64>,
    #[serde(skip)]
    pub iterates: Vec<Triple>,
}

impl FixpointTrace {
    /// Index `j` of the distance that met the tolerance.
    pub fn iterations(&self) -> usize {
        self.distances.len().saturating_sub(1)
    }
}

fn inner_solve(tree: &ScenarioTree, frozen: Driver, terminal: &[f64], obstacles: &Obstacles) -> Result<FixpointSolution> {
    let terminal = terminal.to_vec();
    Ok(match obstacles {
        Obstacles::None => FixpointSolution::Standard(solve_bsde(tree, &frozen, &terminal)?),
        Obstacles::Lower(barrier) => {
            FixpointSolution::OneBarrier(solve_reflected_one(tree, &OneBarrierProblem { driver: frozen, terminal, barrier: barrier.clone() })?)
        }
        Obstacles::Both { lower, upper } => FixpointSolution::TwoBarrier(solve_double_obstacle(
            tree,
            &TwoBarrierProblem { driver: frozen, terminal, lower: lower.clone(), upper: upper.clone() },
        )?),
    })
}

pub fn picard_solve(
    tree: &ScenarioTree,
    driver: &Driver,
    terminal: &[f64],
    obstacles: &Obstacles,
    options: &FixpointOptions,
) -> Result<(FixpointSolution, FixpointTrace)> {
    if driver.penalty.is_some() {
        return Err(Error::InvalidInput("the Picard iteration takes a driver without penalty".into()));
    }
    let alpha = options.alpha.unwrap_or_else(|| alpha_rule(driver.lipschitz()));
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let mut current = options.init.clone().unwrap_or_else(|| Triple::zeros(tree));
    let mut trace = FixpointTrace { alpha, distances: Vec::new(), ratios: Vec::new(), iterates: Vec::new() };
    if options.keep_iterates {
        trace.iterates.push(current.clone());
    }
    let mut run = 0;
    for _ in 0..options.max_iter {
        let base = Predictable::from_fn(tree, |n| driver.eval(n, current.y.get(n), current.z.get(n), current.v.get(n), None));
        let solution = inner_solve(tree, Driver::from_nodes(tree, base), terminal, obstacles)?;
        let next = solution.triple();
        let d = alpha_distance(tree, &next, &current, alpha);
        if let Some(&prev) = trace.distances.last() {
            let r = d / prev;
            trace.ratios.push(r);
            run = if trace.ratios.len() > 1 && r >= 1.0 { run + 1 } else { 0 };
        }
        trace.distances.push(d);
        if options.keep_iterates {
            trace.iterates.push(next.clone());
        }
        if d < options.tol {
            return Ok((solution, trace));
        }
        if run >= NON_CONTRACTING_RUN {
            return Err(Error::NoContractionObserved(trace.ratios));
        }
        current = next;
    }
    Err(Error::MaxIterExceeded(options.max_iter))
}

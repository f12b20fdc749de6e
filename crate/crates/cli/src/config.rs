//! Problem configuration files.

use std::path::Path;

use rbsde_core::scenario_tree::DEFAULT_NODE_CAP;
use rbsde_core::{
    eval_barrier, eval_terminal, BarrierSpec, DriverSpec, EvaluatedBarrier, Expr, MarkSet, Obstacles, OneBarrierProblem,
    ScenarioTree, TwoBarrierProblem,
};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub steps: usize,
    #[serde(default)]
    pub node_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Backward induction with the implicit step.
    #[default]
    Direct,
    /// Picard iteration in the weighted norm.
    Fixpoint,
    /// Two barriers through the pair of Snell envelopes.
    PicardSnell,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

/// A problem on the scenario tree. Give `barrier` for one obstacle, or
/// `lower` and `upper` for two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: Grid,
    #[serde(default)]
    pub marks: MarkSet,
    pub terminal: Expr,
    #[serde(default)]
    pub driver: DriverSpec,
    #[serde(default)]
    pub barrier: Option<BarrierSpec>,
    #[serde(default)]
    pub lower: Option<BarrierSpec>,
    #[serde(default)]
    pub upper: Option<BarrierSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        let schema = |m: &str| Err(Failure::Schema(m.into()));
        if self.grid.steps == 0 {
            return schema("grid.steps must be at least 1");
        }
        if self.barrier.is_some() && (self.lower.is_some() || self.upper.is_some()) {
            return schema("give either `barrier` or `lower`/`upper`, not both");
        }
        if self.lower.is_some() != self.upper.is_some() {
            return schema("`lower` and `upper` must be given together");
        }
        if self.solver.alpha.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
            return schema("solver.alpha must be positive");
        }
        if self.solver.tol.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return schema("solver.tol must be positive");
        }
        Ok(())
    }

    pub fn tree(&self) -> Result<ScenarioTree, Failure> {
        Ok(ScenarioTree::with_cap(self.grid.steps, self.marks.clone(), self.grid.node_cap.unwrap_or(DEFAULT_NODE_CAP))?)
    }

    fn evaluated(&self, tree: &ScenarioTree) -> Result<(rbsde_core::Driver, Vec<f64>), Failure> {
        self.driver.validate()?;
        Ok((self.driver.bind(tree)?, eval_terminal(&self.terminal, tree)?))
    }

    pub fn one_barrier(&self, tree: &ScenarioTree) -> Result<OneBarrierProblem, Failure> {
        let spec = self.barrier.as_ref().ok_or_else(|| Failure::Schema("this command needs a `barrier`".into()))?;
        let (driver, terminal) = self.evaluated(tree)?;
        Ok(OneBarrierProblem { driver, terminal, barrier: eval_barrier(spec, tree)? })
    }

    pub fn two_barrier(&self, tree: &ScenarioTree) -> Result<TwoBarrierProblem, Failure> {
        let (Some(lower), Some(upper)) = (&self.lower, &self.upper) else {
            return Err(Failure::Schema("this command needs `lower` and `upper`".into()));
        };
        let (driver, terminal) = self.evaluated(tree)?;
        Ok(TwoBarrierProblem { driver, terminal, lower: eval_barrier(lower, tree)?, upper: eval_barrier(upper, tree)? })
    }

    /// Driver, terminal value and obstacles, whichever barriers are present.
    pub fn any_problem(&self, tree: &ScenarioTree) -> Result<(rbsde_core::Driver, Vec<f64>, Obstacles), Failure> {
        let (driver, terminal) = self.evaluated(tree)?;
        let eval = |s: &BarrierSpec| -> Result<EvaluatedBarrier, Failure> { Ok(eval_barrier(s, tree)?) };
        let obstacles = match (&self.barrier, &self.lower, &self.upper) {
            (Some(b), _, _) => Obstacles::Lower(eval(b)?),
            (None, Some(l), Some(u)) => Obstacles::Both { lower: eval(l)?, upper: eval(u)? },
            _ => Obstacles::None,
        };
        Ok((driver, terminal, obstacles))
    }
}

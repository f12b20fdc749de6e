//! Reflected backward stochastic differential equations with jumps on a
//! finite scenario tree.
//!
//! The tree carries a symmetric Brownian step and at most one jump of a finite
//! set of marks per step. On it the crate solves standard, one-barrier and
//! two-barrier reflected equations, computes Snell envelopes, runs the
//! penalization and Picard schemes, and checks candidate solutions against the
//! defining conditions.

pub mod bsde;
pub mod corpus;
pub mod error;
pub mod fixpoint;
pub mod penalization;
pub mod process_model;
pub mod reflected_one;
pub mod reflected_two;
pub mod scenario_tree;
pub mod snell;
pub mod solution;
pub mod verify;

pub use bsde::{backward_step, project_zv, solve_bsde, Projection};
pub use error::{Error, Result};
pub use fixpoint::{alpha_norm, alpha_rule, picard_solve, FixpointOptions, FixpointSolution, FixpointTrace, Obstacles, Triple};
pub use process_model::{
    eval_barrier, eval_terminal, Adapted, BarrierSpec, Breakpoint, DeclaredJump, Driver, DriverSpec, EvaluatedBarrier, Expr,
    OneBarrierProblem, Piecewise, Predictable, PredictableMarks, TwoBarrierProblem,
};
pub use reflected_one::{snell_representation_check, solve_reflected_one};
pub use reflected_two::{picard_snell_solve, solve_double_obstacle, MokobodskiWitness};
pub use scenario_tree::{build_tree, Mark, MarkSet, NodeId, ScenarioTree};
pub use snell::{brute_force_value, optimal_stopping_time, snell, SnellResult, StoppingRule};
pub use solution::{SolutionQuadruple, SolutionQuintuple};
pub use verify::{
    check_solution_one, check_solution_two, inject_fault_one, inject_fault_two, regularity_probe, uniqueness_probe_one,
    uniqueness_probe_two, CheckReport, Clause, ClauseResult, RegularityProbe, UniquenessReport, Verdict,
};

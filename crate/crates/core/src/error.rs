use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("infeasible jump intensity: total intensity times step is {0}, must be < 1")]
    InfeasibleIntensity(f64),

    #[error("tree too large: {nodes} nodes exceeds cap {cap}")]
    TreeTooLarge { nodes: u128, cap: usize },

    #[error("invalid mark set: {0}")]
    InvalidMarks(String),

    #[error("declared jump time {0} does not lie on the grid")]
    JumpTimeOffGrid(f64),

    #[error("subtree too large to enumerate: depth {depth}, {leaves} leaves")]
    TooLargeToEnumerate { depth: usize, leaves: u128 },

    #[error("input sequence is not pointwise nondecreasing at entry {entry} (level {level}, node {index})")]
    NotMonotone { entry: usize, level: usize, index: usize },

    #[error("step size too large: dt * C_f = {0} must be < 1")]
    StepsizeTooLarge(f64),

    #[error("terminal value below barrier at leaf {index} (xi = {xi}, barrier = {barrier})")]
    TerminalBelowBarrier { index: usize, xi: f64, barrier: f64 },

    #[error("terminal value outside barriers at leaf {index}")]
    TerminalOutsideBarriers { index: usize },

    #[error("barriers touch before maturity at level {level}, node {index}")]
    BarriersTouch { level: usize, index: usize },

    #[error("driver depends on (y, z, v); a coefficient-free driver is required")]
    DriverNotCoefficientFree,

    #[error("monotonicity violated at level {level}, node {index} by {excess:e} (entry {entry})")]
    MonotonicityViolation { entry: usize, level: usize, index: usize, excess: f64 },

    #[error("no convergence within {0} iterations")]
    MaxIterExceeded(usize),

    #[error("Mokobodski witness rejected: {0}")]
    MokobodskiFailed(String),

    #[error("no contraction observed; measured ratios {0:?}")]
    NoContractionObserved(Vec<f64>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

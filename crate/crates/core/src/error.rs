use thiserror::Error;

/// Errors raised by the reduction laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KreduxError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("derivative order {0} not supported (expected 1 or 2)")]
    InvalidOrder(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("form not positive: min eigenvalue {min_eig:e} at node {node:?}")]
    NotPositive { node: (usize, usize), min_eig: f64 },
    #[error("level {tau} outside fiber range of the moment map at {} spatial node(s)", nodes.len())]
    OutOfRange { tau: f64, nodes: Vec<usize> },
    #[error("degenerate denominator at node {0:?}")]
    Degenerate((usize, usize)),
    #[error("positivity lost at t = {0}")]
    PositivityLost(f64),
    #[error("step unstable at t = {0} after repeated step halving")]
    StepUnstable(f64),
    #[error("solvability violated: integral of source is {0:e}")]
    SolvabilityViolated(f64),
    #[error("unnormalized Kähler-Ricci flow requires a fixed class (torus testbed)")]
    ClassNotFixed,
    #[error("path is not strictly concave in time at spatial node {0}")]
    NonConcave(usize),
    #[error("fiber coordinate {0} outside the realized lift window")]
    OutOfWindow(f64),
    #[error("hypothesis violated at {} (tau, node) pair(s)", .0.len())]
    HypothesisViolated(Vec<(f64, usize)>),
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for KreduxError {
    fn from(e: std::io::Error) -> Self {
        KreduxError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KreduxError>;

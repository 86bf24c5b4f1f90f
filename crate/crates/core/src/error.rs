use thiserror::Error;

/// Errors raised by the numerical stages.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("derivative order {0} exceeds the supported maximum of 4")]
    UnsupportedOrder(usize),
    #[error("action {p:?} lies outside the box [{lo:?}, {hi:?}]")]
    Domain { p: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Legendre transform did not converge at v = {v:?} (residual {residual:e}); Hamiltonian not convex enough")]
    Convexity { v: Vec<f64>, residual: f64 },
    #[error("resonance geometry: {0}")]
    Geometry(String),
    #[error("matrix is not symmetric positive definite (min eigenvalue {0:e})")]
    MatrixDomain(f64),
    #[error("degenerate maximum: {0}")]
    Degeneracy(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("trajectory left the domain: {0}")]
    DomainEscape(String),
    #[error("isolating block certificate failed: {reason} at {witness:?}")]
    Certificate { reason: String, witness: Vec<f64> },
    #[error("no orbit stays in the block at node {node:?}")]
    BlockTooTight { node: Vec<f64> },
    #[error("action minimization between {from:?} and {to:?} did not converge")]
    Kernel { from: Vec<f64>, to: Vec<f64> },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("barrier computation: {0}")]
    Barrier(String),
    #[error("local modification violates {0}")]
    Modification(String),
    #[error("implicit step failed at t = {0}")]
    Step(f64),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shape matrix is singular or indefinite")]
    SingularShape,
    #[error("ellipsoid centers differ by {0:.3e}")]
    CenterMismatch(f64),
    #[error("disturbance cover does not fit inside the target (rho = {rho:.4})")]
    InfeasibleShrink { rho: f64 },
    #[error("synthesis infeasible: {0}")]
    InfeasibleSynthesis(String),
    #[error("one-step growth saturated")]
    InfeasibleStep,
    #[error("solver stalled after {0} iterations")]
    SolverStall(usize),
    #[error("degenerate speed {0:.4} m/s")]
    DegenerateSpeed(f64),
    #[error("integration diverged at t = {0:.3} s")]
    Unstable(f64),
    #[error("equilibrium residual {0:.3e} too large")]
    NotEquilibrium(f64),
    #[error("re-centering stalled in segment {segment}")]
    Stall { segment: usize },
    #[error("no ellipsoid of the new path contains the current state")]
    NoContainingEllipsoid,
    #[error("one-step control infeasible at family {s}, ring {i}")]
    InfeasibleOneStep { s: usize, i: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

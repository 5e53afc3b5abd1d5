use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("iteration diverged at step {step} (state norm {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("series diverges: spectral radius {spectral_radius} >= 1")]
    SeriesDivergent { spectral_radius: f64 },

    #[error("spectrum collision: {0}")]
    SpectrumCollision(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("singular least-squares problem: design matrix is rank deficient (rank {rank} < {cols}) and lambda = 0")]
    SingularProblem { rank: usize, cols: usize },

    #[error("step size {alpha} violates the contraction bound alpha < {bound}")]
    ContractionBound { alpha: f64, bound: f64 },

    #[error("near-neutral fixed point: J - I is singular at iteration {iteration}")]
    NeutralFixedPoint { iteration: usize },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("degenerate Jacobian: zero R diagonal at step {step}")]
    DegenerateJacobian { step: usize },

    #[error("filtration is not sorted at simplex {index}")]
    Ordering { index: usize },

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("non-ergodic process: {0}")]
    NonErgodic(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("admissibility violation: {0}")]
    Admissibility(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid dimension {0}: need at least {1}")]
    InvalidDimension(usize, usize),

    #[error("invalid variance profile: {0}")]
    InvalidProfile(String),

    #[error("Sinkhorn balancing did not converge after {iterations} sweeps (residual {residual:e})")]
    BalancingFailure { iterations: usize, residual: f64 },

    #[error("invalid time {0}: must be non-negative")]
    InvalidTime(f64),

    #[error("unsupported entry law: {0}")]
    UnsupportedLaw(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("spectral parameter {re}{im:+}i is not in the upper half-plane")]
    WrongHalfPlane { re: f64, im: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("numerical failure: {0}")]
    NumericFailure(String),

    #[error("spectral parameter outside the admissible domain: {0}")]
    DomainViolation(String),

    #[error("argument {0} outside the supported range {1}")]
    RangeError(f64, &'static str),

    #[error("integrator step size underflow at s = {0}")]
    StiffFailure(f64),

    #[error("quadrature did not self-converge: relative change {0:e}")]
    QuadratureFailure(f64),

    #[error("inconclusive at this budget: {0}")]
    InconclusiveBudget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

/// Errors raised by the bound machinery, the solver and the verifier.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite {what} at x={x:?}, t={t}")]
    NonFinite { what: &'static str, x: Vec<f64>, t: f64 },

    #[error("diffusion matrix is not symmetric at x={x:?}, t={t} (asymmetry {asymmetry:e})")]
    Asymmetric { x: Vec<f64>, t: f64, asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("outside the declared domain: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    SingularPoint(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("tail integral diverges: {0}")]
    Divergence(String),

    #[error("t={t} is outside the representable range (sup {sup})")]
    Range { t: f64, sup: f64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("overflow while evaluating {0}")]
    Overflow(String),

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Stability { dt: f64, limit: f64 },

    #[error("negative density {value:e} in cell {cell} (peak {peak:e})")]
    NegativeDensity { cell: usize, value: f64, peak: f64 },

    #[error("unsupported coefficients: {0}")]
    Unsupported(String),

    #[error("initial measure is essentially outside the grid (captured mass fraction {captured:e})")]
    Truncation { captured: f64 },

    #[error("test function support {0}")]
    Support(String),

    #[error("weight must be positive, got {value:e} at x={x:?}, t={t}")]
    NonPositiveWeight { value: f64, x: Vec<f64>, t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

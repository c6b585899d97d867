use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix of dimension {dim} is not positive definite")]
    NotPositiveDefinite { dim: usize },

    #[error("singular lag covariance matrix: {0}")]
    SingularMatrix(String),

    #[error("the predictor is the martingale one (a = 0); {0} is undefined")]
    Martingale(&'static str),

    #[error("quadrature did not converge: estimate {estimate}, error {error:e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("hurst estimation failed at index {index}: {reason}")]
    Estimation { index: usize, reason: String },

    #[error("window ending at index {index} needs {window} past observations; series has {len}")]
    WindowOutOfBounds {
        index: usize,
        window: usize,
        len: usize,
    },

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("reports were computed on different series or horizons")]
    MismatchedSeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::SingularMatrix(_) => "singular_matrix",
            Error::Martingale(_) => "martingale",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::Optimizer(_) => "optimizer",
            Error::Estimation { .. } => "estimation",
            Error::WindowOutOfBounds { .. } => "window_out_of_bounds",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Parse { .. } => "parse",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::MismatchedSeries => "mismatched_series",
            Error::Io(_) => "io",
        }
    }
}

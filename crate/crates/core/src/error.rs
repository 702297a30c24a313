use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported derivative order {0} (at most 4)")]
    UnsupportedOrder(usize),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("profile truncation error: {0}")]
    Truncation(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error {error:e}")]
    NonConvergence {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("state validity: {field} = {value:e} below floor {floor:e} at grid point {location:?}")]
    StateValidity {
        field: &'static str,
        value: f64,
        floor: f64,
        location: [usize; 3],
    },

    #[error("run aborted at t = {t}: {reason}")]
    Aborted { t: f64, reason: String },

    #[error("energy functional non-positive ({value:e}) for a nonzero state; raise the C1 weight")]
    CoefficientTooSmall { value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("bad snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameters(_) => "invalid-parameters",
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::UnsupportedOrder(_) => "unsupported-order",
            Error::Resolution(_) => "resolution",
            Error::Truncation(_) => "truncation",
            Error::NonConvergence { .. } => "non-convergence",
            Error::StateValidity { .. } => "state-validity",
            Error::Aborted { .. } => "aborted",
            Error::CoefficientTooSmall { .. } => "coefficient-too-small",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Config { .. } => "config",
            Error::Snapshot(_) => "snapshot",
            Error::Io(_) => "io",
        }
    }
}

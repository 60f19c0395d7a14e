//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A spec, scale set, or option is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API precondition was violated (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced NaN/Inf or is otherwise numerically unusable.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Degenerate mesh (non-increasing nodes, zero-width element, ...).
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Zero pivot encountered after partial pivoting.
    #[error("singular matrix: zero pivot at row {row}")]
    SingularMatrix { row: usize },

    /// Physically invalid input (e.g. refractive index of a slab not real).
    #[error("physical validity error: {0}")]
    Physics(String),

    /// Metric is undefined for the given input (e.g. zero-norm reference).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Spectral analysis requested on a non-uniform grid.
    #[error("grid error: {0}")]
    Grid(String),

    /// Mesh too coarse for the requested wave number (strict mode only).
    #[error("resolution error: {0}")]
    Resolution(String),

    /// An on-disk artifact is inconsistent with its own metadata.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A file carries a format version this build cannot migrate.
    #[error("version mismatch: found format version {found}, supported up to {supported}")]
    Version { found: u32, supported: u32 },

    /// A gradient or loss diverged during training.
    #[error("divergence in {0}: non-finite value")]
    Divergence(String),

    /// Text input (TOML/JSON) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// A parsed value failed semantic validation.
    #[error("validation error: field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: msg.into(),
        }
    }
}

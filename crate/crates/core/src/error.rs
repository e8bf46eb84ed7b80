use thiserror::Error;

/// Errors produced by the core simulation and oracle routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be between 1 and {max}, got {got}")]
    InvalidDim { got: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("lattice ball count would overflow 64 bits (d={dim}, R={radius})")]
    CountOverflow { dim: usize, radius: u64 },

    #[error("field box of {cells} cells exceeds the {max}-cell limit")]
    BoxTooLarge { cells: u128, max: usize },

    #[error("initial data `{which}` has support outside the radius-{radius} ball at site {site:?}")]
    SupportViolation {
        which: &'static str,
        radius: u64,
        site: Vec<i64>,
    },

    #[error("non-finite value produced at step {n}, site {site:?}")]
    NonFinite { n: u64, site: Vec<i64> },

    #[error("tangent argument reached pi/2 at step {n}, site {site:?}; blow-up check was skipped")]
    TanDomain { n: u64, site: Vec<i64> },

    #[error("snapshot parse error at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },

    #[error("sequence window must contain at least 2 values")]
    WindowTooShort,

    #[error("lifespan fit rejected: {0}")]
    LifespanFit(String),

    #[error("growth constants unavailable: {0}")]
    ConstantsUnavailable(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum DsgError {
    #[error("argument error: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver blow-up at t = {time:.6e} (max |u| = {max_abs:.3e})")]
    BlowUp { time: f64, max_abs: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("no descent direction: directional derivative {slope:.3e} is not positive")]
    NoDescentDirection { slope: f64 },

    #[error("line search failed after {trials} trial steps")]
    LineSearchFailed { trials: usize },

    #[error("checksum mismatch: header {expected:016x}, payload {found:016x}")]
    Checksum { expected: u64, found: u64 },

    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DsgError> = std::result::Result<T, E>;

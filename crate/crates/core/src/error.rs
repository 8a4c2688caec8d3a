//! Crate-wide error type.
//!
//! Variants are grouped by failure class so binaries can map them onto
//! distinct process exit codes: configuration problems, malformed or
//! inconsistent data, and numeric breakdown during optimization.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Invalid configuration: bad parameter values, unknown keys, shape
    /// mismatches between declared dimensions.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data: unreadable files, inconsistent scene
    /// directories, masks with no valid entries where entries are required.
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure: non-finite losses, degenerate reductions.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for CLI front ends. 0 is success by convention;
    /// the remaining codes distinguish the failure classes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

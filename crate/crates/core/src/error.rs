//! Crate-wide error type.
//!
//! Variants are grouped by how a driver should react: `Config`-class errors
//! mean the request was malformed, `Numerical` means a run aborted mid-flight
//! (domain exit, NaN, step collapse), `Invariant` means a structural check
//! that should hold by construction failed.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameters, unknown system names, grids too coarse, and similar.
    #[error("config: {0}")]
    Config(String),

    /// State left the certified rectangle during a viscous run.
    #[error("numerical: state left domain at t={t}, x={x} (w={w}, z={z})")]
    DomainExit { t: f64, x: f64, w: f64, z: f64 },

    /// Non-finite values appeared in a field.
    #[error("numerical: {0}")]
    Numerical(String),

    /// A structural invariant did not hold.
    #[error("invariant: {0}")]
    Invariant(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed columnar input.
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    /// Process exit code the command-line driver maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Parse(_) => 2,
            Error::DomainExit { .. } | Error::Numerical(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}

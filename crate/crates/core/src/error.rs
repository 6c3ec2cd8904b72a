use std::path::PathBuf;

use crate::constraint::VarRef;

/// Errors raised while building, loading or checking verification objects.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch at layer {layer}: {message}")]
    Dimension { layer: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("input has length {got}, network expects {expected}")]
    InputLength { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("variable {0} does not exist in this query")]
    InvalidVar(VarRef),

    #[error("constraint has no terms")]
    EmptyConstraint,

    #[error("input variable {0} is unbounded; supply a finite box for every input")]
    UnboundedInput(VarRef),

    #[error("invalid transition spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("copy index {copy} out of range for a query with {copies} copies")]
    CopyOutOfRange { copy: usize, copies: usize },

    #[error("solver returned UNKNOWN: {0}")]
    SolverUnknown(String),

    #[error("search floor too high: output <= -{0} is satisfiable, increase M")]
    SearchFloor(f64),

    #[error("non-monotone verdicts along the searched axis: {0}")]
    NonMonotone(String),

    #[error("{0}")]
    NoInvariant(String),

    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

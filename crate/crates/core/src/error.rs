use std::fmt;
use std::path::PathBuf;

/// Errors surfaced by the solver library.
#[derive(Debug)]
pub enum Error {
    /// Operand dimensions do not match.
    Shape(String),
    /// A diagonal entry required for inversion is (numerically) zero.
    SingularDiagonal { row: usize },
    /// The m-by-m multiplier block is singular: the flow sections are
    /// linearly dependent (e.g. a duplicated section).
    SingularMultiplierBlock(String),
    /// A section/row/column index is out of range.
    Index(String),
    /// An argument lies outside the admissible domain.
    Domain(String),
    /// Invalid configuration (mesh parameters, solver selection, file keys).
    Config(String),
    /// Finite element assembly failure (degenerate element, bad mesh).
    Assembly(String),
    /// Krylov solver breakdown (non-finite residual).
    Breakdown(String),
    /// Inner solver failure inside a preconditioner application, labeled by step.
    InnerSolve {
        step: &'static str,
        source: Box<Error>,
    },
    /// File I/O failure, with the offending path.
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::SingularDiagonal { row } => {
                write!(f, "singular diagonal: |A[{row},{row}]| below tolerance")
            }
            Error::SingularMultiplierBlock(msg) => {
                write!(f, "singular multiplier block: {msg}")
            }
            Error::Index(msg) => write!(f, "index out of range: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Assembly(msg) => write!(f, "assembly error: {msg}"),
            Error::Breakdown(msg) => write!(f, "solver breakdown: {msg}"),
            Error::InnerSolve { step, source } => {
                write!(f, "inner solve failed at step `{step}`: {source}")
            }
            Error::Io { path, source } => {
                write!(f, "I/O error on {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::InnerSolve { source, .. } => Some(source.as_ref()),
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

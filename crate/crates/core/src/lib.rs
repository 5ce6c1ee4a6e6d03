//! nearcomm: turn an almost-commuting pair of Hermitian matrices into an
//! exactly commuting pair nearby, with every intermediate estimate checked
//! numerically. Also provides the sequential soft-measurement scheme for
//! several almost-commuting observables and the grid verification of the
//! recursion bound used by the overlap-pruning argument.

pub mod assembly;
pub mod chain_subspace;
pub mod filters;
pub mod harness;
pub mod povm;
pub mod recursion;
pub mod reduction;
pub mod spectral;
pub mod window_subspace;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("bad matrix file: {0}")]
    BadMatrixFile(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("requested mode does not match the input structure")]
    ModeMismatch,
    #[error("assembled basis has rank {got}, expected {expected}")]
    AssemblyRank { expected: usize, got: usize },
    #[error("recursion denominator is nonpositive ({0:.3e})")]
    DenominatorNonpositive(f64),
    #[error("outcome enumeration too large ({0:.1e} tuples); use sampling")]
    EnumerationTooLarge(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

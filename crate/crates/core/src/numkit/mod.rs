//! Numeric substrate shared by every learner: reverse-mode AD, dense linear
//! algebra, 1-D Sobol points and seeded random streams.

pub mod check;
pub mod linalg;
pub mod rng;
pub mod sobol;
pub mod tape;

pub use linalg::{cholesky_solve, cholesky_with_jitter, lstsq, Cholesky, CholeskySolution, DenseMatrix};
pub use rng::RngStream;
pub use sobol::{sobol_indices, sobol_sample, sobol_unit};
pub use tape::{grad, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    /// A node refers to a parent that does not precede it.
    #[error("tape node {node} refers to parent {parent} that does not precede it")]
    Structural { node: usize, parent: usize },
    #[error("non-finite value at tape node {node}")]
    NonFinite { node: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("rank-deficient system at column {column}")]
    Singular { column: usize },
    #[error("shape error: {0}")]
    Shape(String),
}

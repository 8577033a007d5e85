use thiserror::Error;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("degenerate box: side {axis} has length {length}")]
    DegenerateBox { axis: usize, length: f64 },

    #[error("mesh size must be positive, got {0}")]
    InvalidMeshSize(f64),

    #[error("unsupported dimension {0}, expected 1, 2 or 3")]
    UnsupportedDimension(usize),

    #[error("subcomplex selection is empty")]
    EmptySelection,

    #[error("unknown boundary label `{0}`")]
    UnknownLabel(String),

    #[error("invalid complex: {0}")]
    InvalidComplex(String),

    #[error("degenerate {dim}-simplex {index} (volume {volume:e})")]
    DegenerateSimplex { dim: usize, index: usize, volume: f64 },

    #[error("degree {got} does not match expected degree {expected}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("cochain lives on complex {got:016x}, expected {expected:016x}")]
    ComplexMismatch { expected: u64, got: u64 },

    #[error("cochain is not zero on the interface, offending {degree}-simplices {simplices:?} (max |value| {max:e})")]
    NonConforming {
        degree: usize,
        simplices: Vec<usize>,
        max: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("datum not in the orthogonal complement of harmonic forms (relative harmonic component {ratio:e})")]
    HarmonicComponent { ratio: f64 },

    #[error("compatibility violated: {what} (relative residual {residual:e})")]
    Incompatible { what: String, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

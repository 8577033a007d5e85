//! Sparse storage, factorizations and symmetric eigensolvers.

pub mod eigen;
pub mod solve;
pub mod sparse;

pub use eigen::{null_space, smallest_eigenpairs, EigenOptions, EigenPairs, NullSpace};
pub use solve::Factor;
pub use sparse::Csr;

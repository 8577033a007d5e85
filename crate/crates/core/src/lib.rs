//! Discrete exterior calculus on simplicial complexes: Whitney forms,
//! discrete Hodge theory, recursive minimal-norm cochain extension from a
//! subdomain to an enclosing box, Poincaré constants, and an unfitted
//! (ghost-penalty) harness.

// `!(x <= tol)` is deliberate throughout: NaN must fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cutfem;
pub mod error;
pub mod extension;
pub mod forms;
pub mod hodge;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod par;
pub mod plot;
pub mod runner;
pub mod spectra;

pub use error::{Error, Result};

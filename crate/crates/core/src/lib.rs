//! Magnetic Lagrangian systems on fiber products, the compatible
//! transformations between them, and Routh reduction realized as a
//! transformation followed by a fiberwise reduction.
//!
//! State vectors on `T_PQ` are laid out as `(q[0..n), v[0..n), p[0..k))`;
//! points of `P` as `(q, p)`.

pub mod error;
pub mod hamside;
pub mod harness;
pub mod lagrangian;
pub mod numcore;
pub mod presym;
pub mod reduction;
pub mod symmetry;
pub mod transform;

pub use error::{Error, Result};

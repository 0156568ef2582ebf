//! Sensor-network localization by completing a partially observed Euclidean
//! distance matrix.
//!
//! The unknown Gram matrix `Y = X Xᵀ` is searched for on the manifold of
//! rank-`k` PSD matrices with a Riemannian nonlinear conjugate-gradient
//! method; coordinates are then read off the eigenform and aligned to a
//! reference frame.

// `!(x > 0.0)` style guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod io;
pub mod localization;
pub mod manifold;
pub mod matrix_ops;
pub mod solver;

pub use error::{Error, Result};
pub use manifold::{ManifoldPoint, TangentVector};
pub use matrix_ops::{SampleSet, SymmetricMatrix};

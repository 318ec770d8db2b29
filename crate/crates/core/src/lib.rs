//! Numerical laboratory for wide-network kernel limits of DGM and PINN training.
//!
//! Shallow networks `Q = η N^{-β} Σ c σ(w·x + b)` are trained by clipped gradient flow;
//! their wide limit is a linear evolution in Monte Carlo estimates of the limit kernels,
//! solved by spectral decomposition.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod experiments;
pub mod jet;
pub mod kernel;
pub mod network;
pub mod operator;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};

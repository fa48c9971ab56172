//! Nonlocal diffusion of convolution type with a flux nonlinearity, its
//! rescaled local (KPZ) limit, and experiments checking convergence,
//! comparison, and decay properties at desk scale.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod discretization;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod kernel;
pub mod nonlinearity;
pub mod reference;
pub mod report;
pub mod sum;

pub use error::{Error, Result};

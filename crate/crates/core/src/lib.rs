//! Conditional denoising-diffusion surrogate for 2-D flow problems.
//!
//! The crate generates Navier-Stokes and Darcy benchmark data with reference
//! solvers ([`datagen`]), trains a diffusion transformer that predicts the
//! noise added to a target field given the input fields ([`model`],
//! [`training`]), samples solutions by ancestral denoising ([`diffusion`]) and
//! scores them with the relative L2 error ([`eval`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod datagen;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod fields;
pub mod model;
pub mod seed;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};

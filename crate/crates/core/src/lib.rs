//! Numerical laboratory for the weighted semilinear heat equation
//! `u_t - div(w(x) ∇u) = u^p` with `w = |x_1|^a` or `w = |x|^b`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod fit;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod lorentz;
pub mod quadrature;
pub mod report;
pub mod weight;

pub use error::{Error, Result};
pub use weight::{Weight, WeightKind};

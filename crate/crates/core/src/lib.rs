//! Identification of the support `[ξᴸ, ξᴿ]` of a uniform input distribution
//! for scalar conservation laws, using a discontinuous stochastic Galerkin
//! discretization with an adjoint-based gradient.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod basis;
pub mod commands;
pub mod config;
pub mod data;
pub mod dsg;
pub mod error;
pub mod field;
pub mod mesh;
pub mod optimizer;
pub mod problems;

pub use error::{DsgError, Result};
pub use field::{CoefficientField, FieldShape};
pub use mesh::{Boundary, DistributionParams};

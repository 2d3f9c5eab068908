//! Two-step inference for a single component of a high-dimensional additive model.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod despars;
pub mod error;
pub mod glasso;
pub mod inference;
pub mod linalg;
pub mod pipeline;
pub mod quadrature;
pub mod resmooth;
pub mod simlab;

pub use error::{Error, Result};

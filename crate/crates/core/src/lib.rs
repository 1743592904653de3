//! Neumann heat flows on boxes, their adjoint Fokker-Planck flows, and
//! numerical certification of differential Harnack and convexity estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod calculus;
pub mod error;
pub mod estimator;
pub mod fields;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod operators;
pub mod potential;
pub mod scenario;

pub use error::{Error, Result};

//! Boundary-element toolkit for reconstructing cardiac transmembrane
//! potentials under the bidomain model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bem;
pub mod bem2d;
pub mod cauchy;
pub mod checks;
pub mod cli;
pub mod error;
pub mod field;
pub mod kernels;
pub mod mesh;
pub mod oracle;
pub mod parabolic;
pub mod quadrature;
pub mod reconstruction;
pub mod solvers;

pub use error::{Error, Result};

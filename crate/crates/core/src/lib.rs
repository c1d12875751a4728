//! Hermite–Sobolev coordinates for distribution-valued solutions of the
//! linear SPDE driven by a stochastic flow, with the numerical checks that
//! tie the pieces together.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod flow;
pub mod harness;
pub mod matrix;
pub mod model;
pub mod operators;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sobolev;
pub mod solutions;
pub mod testfn;

pub use error::{Error, Result};
pub use matrix::{OperatorMatrix, OperatorTag};
pub use scalar::Real;
pub use sobolev::{CoeffVector, SobolevIndex};

pub type CoeffVectorF64 = CoeffVector<f64>;
pub type OperatorMatrixF64 = OperatorMatrix<f64>;

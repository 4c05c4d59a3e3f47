//! Stochastic second-order optimization with line searches under noise.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finitesum;
pub mod harness;
pub mod linalg;
pub mod logreg;
pub mod oracle;
pub mod rng;
pub mod slbfgs;
pub mod solvers;
pub mod steplen;
pub mod synthetic;
pub mod trace;

pub use error::{LsosError, Result};
pub use linalg::{SpdOperator, Vector};
pub use oracle::{NoiseConsistency, NoisyOracle, OracleSample, Want};
pub use rng::RngStream;

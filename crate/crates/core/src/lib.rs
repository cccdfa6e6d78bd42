//! Schur-stable projection of state matrices and stability-constrained
//! identification of discrete-time linear state-space models.

pub mod benchgen;
pub mod cli;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod ortho;
pub mod schur;
pub mod stable;
pub mod sysid;

pub use error::{Error, Result};
pub use matrix::Matrix;

//! Covariant boundary-value mechanics: variational classical solutions,
//! boundary Poisson brackets, density-valued quantization on grids and
//! boundary quantum states.

pub mod error;
pub mod bqm;
pub mod classical;
pub mod geometry;
pub mod numerics;
pub mod quantize;
pub mod symplectic;
pub mod sysdsl;

pub use error::{Error, Result};

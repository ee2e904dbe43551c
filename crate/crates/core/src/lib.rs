//! Lattice random walks for distributed-order space-fractional diffusion.

pub mod analytic;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod kernel;
pub mod measure;
pub mod montecarlo;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use kernel::{build_kernel, lattice_zeta, norming_constant, q_coefficient, stability_sigma, LatticeKernel};
pub use measure::{DensityFamily, OrderMeasure, OrderTerm};

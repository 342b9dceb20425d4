//! Single-photon scattering through two-dimensional crossed-waveguide atomic arrays.
//!
//! The Green-function path ([`green`]) is the production solver; [`transfer`]
//! provides an independent transfer-matrix oracle. [`spectral`] covers the
//! non-Hermitian eigenproblem and scale-free localization, and [`qgh`]
//! extracts port totals, mean-position shifts and sweep observables.

pub mod error;
pub mod green;
pub mod hamiltonians;
pub mod model;
pub mod qgh;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use num_complex::Complex64;

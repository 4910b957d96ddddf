//! Rigid disk in a kinetic sea of externally forced particles with diffuse
//! reflection: drag forces, the recollision expansion, a Picard solver for
//! the body velocity and a Monte Carlo cross-check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod characteristics;
pub mod error;
pub mod fields;
pub mod fixedpoint;
pub mod forces;
pub mod kernels;
pub mod montecarlo;
pub mod path;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};

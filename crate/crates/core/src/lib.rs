//! Finite-dimensional laboratory for order `-d` pseudo-differential symbols:
//! residues, torus quantization, eigenvalue asymptotics and Dixmier-trace
//! surrogates.

pub mod bump;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod quadrature;
pub mod quantize;
pub mod spectral;
pub mod symbol;
pub mod traces;

pub use error::{Error, Result};
pub use num_complex::Complex64;

//! FFT-based homogenization of periodic elastic and elastoplastic composites.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod green;
pub mod io;
pub mod material;
pub mod microstructure;
pub mod solver;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

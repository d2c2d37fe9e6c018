//! Homogeneous groups from structure constants, with numerical
//! differentiation, metric Jacobians and an area-formula harness.

pub mod algebra;
pub mod area;
pub mod bch;
pub mod catalog;
pub mod cli;
pub mod differentiation;
pub mod error;
pub mod io;
pub mod maps;
pub mod measure;
pub mod norm;
pub mod poly;
pub mod scalar;

pub use error::{Error, Result};

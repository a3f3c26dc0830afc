//! Numerical lab for periodic homogenization of Hamilton–Jacobi equations
//! with line and point defects.

pub mod cell;
pub mod control;
pub mod corrector;
pub mod epsilon;
pub mod error;
pub mod geometry;
pub mod presets;
pub mod scenario;
pub mod sl;
pub mod stratified;

pub use error::{Error, Result};

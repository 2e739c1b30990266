//! Adaptive finite elements for optimal control of the spectral fractional
//! Laplacian through its extension to a truncated weighted cylinder.

pub mod afem;
pub mod assembly;
pub mod base_mesh;
pub mod control;
pub mod cylinder_mesh;
pub mod data;
pub mod error;
pub mod estimator;
pub mod linear_solver;
pub mod ocp;
pub mod quadrature;
pub mod runner;
pub mod sparse;
pub mod spectral;
pub mod vtk;

pub use error::{Error, Result};

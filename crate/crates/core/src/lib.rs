//! Robust photometric stereo with dictionary-learning regularization.
//!
//! Four normal estimators share one data model: least squares (LS),
//! piecewise-linear least squares (PLS), and their patch-sparsity
//! regularized counterparts DLNV and PDLNV. Supporting modules cover patch
//! extraction, the piecewise-linear inverse reflectance, dictionary
//! learning, metrics and noise injection, surface integration, and file IO.

pub mod cli;
pub mod dictlearn;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod patch;
pub mod reflectance;
pub mod solvers;
pub mod surface;

pub use error::{Error, Result};
pub use field::{ImageStack, LightMatrix, NormalField, PixelMask};
pub use patch::{PatchGrid, PatchMatrix};

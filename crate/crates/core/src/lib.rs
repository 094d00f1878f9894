//! Face identification toolkit and experiment harness.
//!
//! The pipeline runs: [`dataset`] sampling and splitting, [`preprocess`]
//! canonicalization to 70x60 equalized faces, [`features`] (eigenfaces and
//! fisherfaces), [`metrics`] distance matrices, [`classify`] (nearest
//! neighbour and RBF SVM), [`fusion`] of normalized distance matrices, and
//! the [`experiments`] protocols that tie them together.

pub mod classify;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod features;
pub mod fusion;
pub mod metrics;
mod linalg;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};

//! Synthetic skin-lesion bias testbed.
//!
//! Generate lesion images with plantable acquisition artifacts, measure how
//! artifacts correlate with the diagnosis, build trap splits whose
//! artifact/label correlation flips between train and test, and train small
//! CNNs with and without gradient-reversal bias unlearning.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod lntl;
pub mod nncore;
pub mod raster;
pub mod rng;
pub mod stats;
pub mod synthgen;
pub mod transforms;
pub mod trapset;

pub use error::{Error, Result};

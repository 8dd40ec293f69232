//! stylekit: build contrastive style triplets from parallel synthetic style
//! data, train a content-independent style encoder with a triplet margin
//! loss, and evaluate style representations on STEL, STEL-or-Content,
//! authorship verification, style-transfer discrimination, and
//! dataset-quality metrics.

pub mod cli;
pub mod data;
pub mod downstream;
pub mod error;
pub mod genkit;
pub mod par;
pub mod quality;
pub mod registry;
pub mod rng;
pub mod sampler;
pub mod stel;
pub mod trainer;
pub mod vecmath;

pub use error::{Error, Result};

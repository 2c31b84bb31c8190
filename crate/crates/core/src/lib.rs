//! Volumetric similarity metrics: classic field metrics, an entropy-based
//! similarity model, synthetic data generation and a learned multiscale metric.

pub mod cli;
pub mod datagen;
pub mod eval;
pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod numeric;
pub mod similarity;
pub mod training;

pub use error::{Error, Result};
pub use field::{Axis, FieldKind, VolumeField};

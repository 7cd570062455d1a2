//! Gaussian-process regression with transformed polynomial trends.

pub mod benchmarks;
pub mod design;
pub mod distributions;
pub mod error;
pub mod experiment;
pub mod input_model;
pub mod kernel;
pub mod gp;
pub mod optimize;
pub mod trend;

pub use error::{Error, Result};

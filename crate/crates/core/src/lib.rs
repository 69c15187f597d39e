//! EEG cognitive-decline classification: preprocessing, spectral and
//! temporal features, FBCSP, kernel SVMs and subject-wise cross-validation.

pub mod config;
pub mod error;
pub mod eval;
pub mod fbcsp;
pub mod io;
pub mod linalg;
pub mod ml;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod signal;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

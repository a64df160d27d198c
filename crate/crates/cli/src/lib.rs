//! Experiment presets, sweeps and CSV output for the `kinwave` binary.

pub mod conditioning;
pub mod error;
pub mod output;
pub mod presets;
pub mod scenarios;

pub use error::{Error, Result};

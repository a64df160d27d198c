//! Well-balanced numerics for a kinetic run-and-tumble chemotaxis model
//! coupled to a signal and a nutrient, with a travelling-wave analysis
//! engine.

pub mod banded;
pub mod error;
pub mod kinetic;
pub mod model;
pub mod parabolic;
pub mod quadrature;
pub mod scattering;
pub mod sim;
pub mod waves;

pub use error::{Error, Result};

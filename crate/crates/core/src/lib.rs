pub mod configuration;
pub mod error;
pub mod estimates;
pub mod geometry;
pub mod interaction;
pub mod mark_measure;
pub mod potential;
pub mod quadrature;
pub mod reference_measure;
pub mod rng;
pub mod specification;
pub mod stats;
pub mod test_function;

pub use error::{Assumption, Error, Result};

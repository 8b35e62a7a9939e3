pub mod chi;
pub mod discrepancy;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod kernel;
pub mod linalg;
pub mod rounding;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};

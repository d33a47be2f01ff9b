pub mod dataset;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod optimizer;
pub mod oracle;
pub mod parallel;
pub mod surrogate;

pub use error::{Error, Result};

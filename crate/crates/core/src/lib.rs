pub mod anchors;
pub mod captioner;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod tensor_engine;
pub mod tep;
pub mod trainer;

pub use error::{Error, Result};

pub mod breath_analysis;
pub mod cli;
pub mod config;
pub mod domain;
pub mod dsp;
pub mod error;
pub mod learn;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod stl;
pub mod synthgen;
pub mod telemetry;

pub use error::{Error, Result};

//! Experiment harness for the conditioned Curie-Weiss chain: configuration,
//! experiment runners, CSV rows and SVG plots.

pub mod config;
pub mod error;
pub mod expected;
pub mod experiments;
pub mod plot;
pub mod rows;
pub mod stats;

pub use config::Config;
pub use error::{Result, XlabError};
pub use expected::Expected;
pub use experiments::{run, Experiment, Report};

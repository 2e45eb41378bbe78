//! Scenario files, experiment drivers and output formats for the
//! `cpsl-sim` command line. The numerics live in `cpsl-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{load_file, preset, Loaded, Scenario};
pub use error::{SimError, SimResult};

//! Configuration, task runners and artifact output for the `qmep` binary.

pub mod config;
pub mod disk;
pub mod error;
pub mod source;
pub mod tasks;

pub use config::ScenarioConfig;
pub use error::{CliError, Result};
pub use source::Source;
pub use tasks::{run, Artifact, ResultManifest};

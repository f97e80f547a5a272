//! Command-line front end: configuration, checkpoints, the experiment
//! pipeline and report rendering.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;

/// Invalid invocation or configuration. Maps to exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

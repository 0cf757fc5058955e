//! Command-line companion to `biofuse-core`: dataset files on disk,
//! synthetic data generation, run configuration, trained-model storage,
//! and the report outputs produced by the `biofuse` binary.
//!
//! The core crate owns every algorithm; this crate owns every file format.
//! Each pipeline stage reads its inputs from disk and writes its outputs
//! to disk, so stages can be rerun or inspected independently and a rerun
//! with the same inputs produces byte-identical outputs.

pub mod cli;
pub mod config;
pub mod ingest;
pub mod model_io;
pub mod pipeline;
pub mod reports;
pub mod synthgen;

/// A problem with the configuration, arguments, or required input files,
/// as opposed to a failure while executing a valid run. The CLI maps
/// errors carrying this marker to exit code 1 and everything else to 2.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl core::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

/// Builds a validation-flavored error.
pub fn invalid(msg: String) -> anyhow::Error {
    anyhow::Error::new(ValidationError(msg))
}

/// True when any link of the error chain is a [`ValidationError`].
pub fn is_validation_error(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<ValidationError>().is_some())
}

//! Pipeline around [`pcr_core`]: dump ingest, file formats, the remote
//! mask-fill client and the stage runner behind the `pcr` binary.

pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod manifest;
pub mod pipeline;
pub mod remote;

pub use config::PipelineConfig;
pub use error::{PcrError, Result};
pub use pipeline::{run, Stage, StageFailure};

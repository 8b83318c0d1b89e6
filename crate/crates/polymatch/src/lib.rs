//! File formats, pipeline orchestration and the `upm2` command-line tool
//! around [`polymatch_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod viz;

pub use config::{Matcher, PipelineConfig, SearchMode};
pub use error::CliError;
pub use pipeline::{detect_polygons, run_pipeline, PipelineOutput, StageTimings};

//! Configuration, the end-to-end pipeline and report export for the
//! `stokeslab` command-line tool.

pub mod config;
pub mod export;
pub mod pipeline;

pub use config::{ConfigError, RunConfig};
pub use export::{export, export_csv, export_json, ExportError, Format};
pub use pipeline::{run_pipeline, run_with_branch, BifurcationReport, PipelineError, Stage};

//! Experiment harness around the core library: flat-file configuration,
//! model checkpointing, the staged end-to-end pipeline and report emission.

pub mod ckpt;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, Stage};
pub use pipeline::{run_pipeline, Mode, PipelineOutcome, RunOptions};
pub use report::RunReport;

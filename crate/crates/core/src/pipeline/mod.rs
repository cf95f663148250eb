//! CLI-facing orchestration: config file, run manifest, stage chain, and the
//! bundled synthetic-corpus generator.

pub mod config;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use config::PipelineConfig;
pub use manifest::RunManifest;
pub use stages::{run_all, stage_run, RunLock, Stage, STAGE_ORDER};

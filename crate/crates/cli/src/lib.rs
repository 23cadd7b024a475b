//! Command-line front end: presets, pipelines and file outputs.

pub mod commands;
pub mod output;
pub mod preset;

pub use hdmbqc::metrics::{eqrr, loss_db, MetricsRecord};
pub use output::{resolve_root, OutputDir, DEFAULT_OUT_DIR, OUT_DIR_ENV};
pub use preset::{ExperimentPreset, Stage, BUILTIN, SCHEMA_VERSION};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("preset: {0}")]
    Preset(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("encoding: {0}")]
    Encoding(#[from] hdmbqc::EncodingError),
    #[error("graph: {0}")]
    Graph(#[from] hdmbqc::GraphError),
    #[error("state: {0}")]
    State(#[from] hdmbqc::StateError),
    #[error("witness: {0}")]
    Witness(#[from] hdmbqc::WitnessError),
    #[error("feedforward: {0}")]
    Feedforward(#[from] hdmbqc::FeedforwardError),
    #[error("scheduler: {0}")]
    Schedule(#[from] hdmbqc::ScheduleError),
    #[error("mplc: {0}")]
    Mplc(#[from] hdmbqc::MplcError),
    #[error("metrics: {0}")]
    Metrics(#[from] hdmbqc::MetricsError),
}

impl CliError {
    /// 3 for bad presets and files, 4 for errors raised by a module, 5 when
    /// a result fails its own consistency check. Usage errors exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Preset(_) | CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => 3,
            CliError::Check(_) => 5,
            _ => 4,
        }
    }
}

/// Runs every stage the preset lists, in order, into `<root>/<name>`.
pub fn run_preset(p: &ExperimentPreset, root: &Path) -> Result<Vec<String>, CliError> {
    p.validate()?;
    run_stages(p, &p.stages, root)
}

pub fn run_stages(p: &ExperimentPreset, stages: &[Stage], root: &Path) -> Result<Vec<String>, CliError> {
    let out = OutputDir::create(root, &p.name, p.seed)?;
    let mut lines = Vec::new();
    for &s in stages {
        lines.extend(commands::run_stage(s, p, &out)?);
    }
    lines.push(format!("outputs in {}", out.path().display()));
    Ok(lines)
}

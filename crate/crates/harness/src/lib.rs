//! Evaluation pipeline for generated backends.
//!
//! A run prepares a throwaway workspace, applies a patch, starts the server
//! it describes, drives the behavioral suite against it and checks the patch
//! against the task's structural constraints. Campaigns fan runs out over a
//! worker pool and persist one [`RunRecord`] per run.

pub mod campaign;
pub mod config;
pub mod golden;
pub mod pipeline;
pub mod process;
pub mod provider;
pub mod record;
pub mod taxonomy;
pub mod workspace;

use thiserror::Error;

pub use campaign::{load_results, run_campaign, CampaignIndex, CampaignOptions, PortPool};
pub use config::HarnessConfig;
pub use pipeline::{build_phase, evaluate_phase, BuildOutput, EvalOptions};
pub use provider::PatchProvider;
pub use record::{PatchDocument, RunRecord, RunStatus, TokenUsage};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`git {args}` failed: {stderr}")]
    Git { args: String, stderr: String },
    /// The task itself could not be prepared (e.g. its ablation patch does
    /// not apply). Distinct from a failed run.
    #[error("task setup failed for {task}: {reason}")]
    TaskSetup { task: String, reason: String },
    #[error("patch provider: {0}")]
    Provider(String),
    #[error("invalid provider spec `{0}` (expected recorded:<dir> or command:<shell command>)")]
    ProviderSpec(String),
    #[error("config: {0}")]
    Config(String),
    #[error("results: {0}")]
    Results(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

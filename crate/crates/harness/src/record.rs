use serde::{Deserialize, Serialize};
use serde_json::Value;
use structbench_core::diff::{FileChange, ParsedDiff};
use structbench_core::metrics::RunScore;
use structbench_core::task::{ConstraintLevel, ConstraintSet, Framework};
use structbench_core::verify::VerifierReport;
use structbench_http::suite::SuiteResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

/// The parsed patch a run was evaluated on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchDocument {
    pub baseline_ref: Option<String>,
    pub files: Vec<FileChange>,
}

impl PatchDocument {
    pub fn new(diff: ParsedDiff, baseline_ref: Option<String>) -> Self {
        PatchDocument {
            baseline_ref,
            files: diff.files,
        }
    }

    pub fn parsed(&self) -> ParsedDiff {
        ParsedDiff {
            files: self.files.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The pipeline ran to the end; the scores say how well.
    Completed,
    /// The patch did not apply; nothing was started.
    PatchNotApplied,
    /// The task needs an external database that is not configured.
    EnvironmentSkipped,
    /// The task could not be prepared (e.g. its ablation patch failed).
    TaskSetupError,
    /// The harness itself failed.
    InternalError,
}

impl RunStatus {
    /// Whether the run counts towards scores.
    pub fn is_scored(self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::PatchNotApplied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task_id: String,
    pub trial: u32,
    pub agent: String,
    pub model: String,
    pub framework: Framework,
    pub constraints: ConstraintSet,
    pub level: ConstraintLevel,
    pub status: RunStatus,
    pub patch: PatchDocument,
    pub patch_applied: bool,
    pub server_started: bool,
    pub health_ok: bool,
    pub suite: SuiteResult,
    pub verifier_reports: Vec<VerifierReport>,
    pub structurally_compliant: bool,
    pub logs: String,
    pub token_usage: Option<TokenUsage>,
    pub wall_time: f64,
}

pub fn run_id(task_id: &str, trial: u32) -> String {
    format!("{task_id}.t{trial}")
}

impl RunRecord {
    pub fn full_pass(&self) -> bool {
        self.suite.all_passed() && self.structurally_compliant
    }

    pub fn score(&self) -> RunScore {
        RunScore::new(
            self.task_id.clone(),
            self.trial,
            self.agent.clone(),
            self.model.clone(),
            self.suite.assertions_passed,
            self.suite.assertions_total,
            self.structurally_compliant,
        )
    }

    /// JSON without the fields that legitimately differ between replays.
    pub fn comparable_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("record serializes");
        if let Value::Object(map) = &mut v {
            map.remove("wall_time");
            map.remove("logs");
        }
        v
    }
}

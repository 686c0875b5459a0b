//! Patch sources standing in for live coding agents.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::process::run_step;
use crate::record::TokenUsage;
use crate::workspace::Workspace;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchProvider {
    /// Pre-recorded diffs, one per task (and optionally per trial).
    RecordedDirectory(PathBuf),
    /// A shell command run inside the prepared workspace; whatever it changes
    /// becomes the patch.
    ExternalCommand(String),
}

impl FromStr for PatchProvider {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("recorded", dir)) if !dir.is_empty() => {
                Ok(PatchProvider::RecordedDirectory(PathBuf::from(dir)))
            }
            Some(("command", cmd)) if !cmd.trim().is_empty() => {
                Ok(PatchProvider::ExternalCommand(cmd.to_string()))
            }
            _ => Err(HarnessError::ProviderSpec(s.to_string())),
        }
    }
}

impl fmt::Display for PatchProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchProvider::RecordedDirectory(dir) => write!(f, "recorded:{}", dir.display()),
            PatchProvider::ExternalCommand(cmd) => write!(f, "command:{cmd}"),
        }
    }
}

/// Candidate locations of the recorded diff for `(task_id, trial)`, most
/// specific first.
pub fn recorded_candidates(dir: &Path, task_id: &str, trial: u32) -> [PathBuf; 3] {
    [
        dir.join(task_id).join(format!("trial-{trial}.diff")),
        dir.join(task_id).join("patch.diff"),
        dir.join(format!("{task_id}.diff")),
    ]
}

pub fn resolve_recorded(dir: &Path, task_id: &str, trial: u32) -> Result<PathBuf, HarnessError> {
    let candidates = recorded_candidates(dir, task_id, trial);
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| {
            HarnessError::Provider(format!(
                "no recorded patch for {task_id} trial {trial} (looked for {})",
                candidates
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

/// Token counts stored next to a recorded diff as `<diff>.usage.json`.
pub fn read_usage(path: &Path) -> Option<TokenUsage> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

pub(crate) fn usage_sidecar(diff: &Path) -> PathBuf {
    let mut name = diff.as_os_str().to_os_string();
    name.push(".usage.json");
    PathBuf::from(name)
}

/// What an external command produced besides its file changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandRun {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub log: String,
    pub token_usage: Option<TokenUsage>,
}

/// Runs an external-command provider inside `ws`.
///
/// The command sees `STRUCTBENCH_PROMPT_FILE`, `STRUCTBENCH_TASK_ID`,
/// `STRUCTBENCH_TRIAL` and `STRUCTBENCH_USAGE_FILE`; the prompt and usage
/// files live outside the working tree so they never enter the diff.
pub(crate) fn run_command(
    ws: &Workspace,
    command: &str,
    task_id: &str,
    trial: u32,
    prompt: &str,
    timeout: Duration,
) -> Result<CommandRun, HarnessError> {
    let prompt_file = ws.temp_dir().join("prompt.md");
    std::fs::write(&prompt_file, prompt).map_err(|e| HarnessError::io(&prompt_file, e))?;
    let usage_file = ws.temp_dir().join("usage.json");
    let log = ws.temp_dir().join("provider.log");
    let env = vec![
        (
            "STRUCTBENCH_PROMPT_FILE".to_string(),
            prompt_file.display().to_string(),
        ),
        ("STRUCTBENCH_TASK_ID".to_string(), task_id.to_string()),
        ("STRUCTBENCH_TRIAL".to_string(), trial.to_string()),
        (
            "STRUCTBENCH_USAGE_FILE".to_string(),
            usage_file.display().to_string(),
        ),
    ];
    let outcome =
        run_step(command, &ws.root, &env, &log, timeout).map_err(|e| HarnessError::io(&log, e))?;
    Ok(CommandRun {
        exit_code: outcome.exit_code,
        timed_out: outcome.timed_out,
        log: std::fs::read_to_string(&log).unwrap_or_default(),
        token_usage: read_usage(&usage_file),
    })
}

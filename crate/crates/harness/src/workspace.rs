//! Throwaway git workspaces.
//!
//! Layout of the temporary directory:
//!
//! ```text
//! <tmp>/repo/         working tree, baseline committed
//! <tmp>/server.log    server stdout and stderr
//! <tmp>/setup.log     setup command output
//! ```

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use structbench_core::diff::strip_excluded_sections;
use structbench_core::task::RepoRef;
use tempfile::TempDir;

use crate::HarnessError;

const GIT_IDENTITY: [&str; 6] = [
    "-c",
    "user.name=structbench",
    "-c",
    "user.email=structbench@localhost",
    "-c",
    "commit.gpgsign=false",
];

pub struct Workspace {
    dir: TempDir,
    pub root: PathBuf,
    pub baseline_ref: String,
    pub port: u16,
    pub server_log: PathBuf,
    pub setup_log: PathBuf,
}

impl Workspace {
    /// An empty repository with one empty baseline commit.
    pub fn empty(port: u16) -> Result<Workspace, HarnessError> {
        let dir = tempfile::Builder::new()
            .prefix("structbench-")
            .tempdir()
            .map_err(|e| HarnessError::io(std::env::temp_dir(), e))?;
        let root = dir.path().join("repo");
        std::fs::create_dir(&root).map_err(|e| HarnessError::io(&root, e))?;
        let mut ws = Workspace {
            server_log: dir.path().join("server.log"),
            setup_log: dir.path().join("setup.log"),
            dir,
            root,
            baseline_ref: String::new(),
            port,
        };
        ws.git(&["init", "-q"])?;
        ws.commit_baseline()?;
        Ok(ws)
    }

    /// A checkout of `repo` at its pinned commit with `ablation` applied and
    /// committed as the baseline. Either step failing is a task-setup error.
    pub fn feature(
        task_id: &str,
        port: u16,
        repo: &RepoRef,
        ablation: &str,
    ) -> Result<Workspace, HarnessError> {
        let setup = |reason: String| HarnessError::TaskSetup {
            task: task_id.to_string(),
            reason,
        };
        let dir = tempfile::Builder::new()
            .prefix("structbench-")
            .tempdir()
            .map_err(|e| HarnessError::io(std::env::temp_dir(), e))?;
        let root = dir.path().join("repo");
        let out = Command::new("git")
            .args(["clone", "-q", &repo.url])
            .arg(&root)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| HarnessError::io(&root, e))?;
        if !out.status.success() {
            return Err(setup(format!(
                "cannot clone {}: {}",
                repo.url,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let mut ws = Workspace {
            server_log: dir.path().join("server.log"),
            setup_log: dir.path().join("setup.log"),
            dir,
            root,
            baseline_ref: String::new(),
            port,
        };
        ws.git(&["checkout", "-q", &repo.commit])
            .map_err(|e| setup(format!("cannot check out {}: {e}", repo.commit)))?;
        ws.apply(ablation)
            .map_err(|e| setup(format!("ablation patch does not apply: {e}")))?;
        ws.commit_baseline()?;
        Ok(ws)
    }

    pub fn temp_dir(&self) -> &Path {
        self.dir.path()
    }

    fn commit_baseline(&mut self) -> Result<(), HarnessError> {
        self.git(&["add", "-A"])?;
        self.git_with_identity(&[
            "commit",
            "-q",
            "--allow-empty",
            "--no-verify",
            "-m",
            "baseline",
        ])?;
        self.baseline_ref = self.git(&["rev-parse", "HEAD"])?.trim().to_string();
        Ok(())
    }

    pub fn git(&self, args: &[&str]) -> Result<String, HarnessError> {
        self.run_git(args, None)
    }

    fn git_with_identity(&self, args: &[&str]) -> Result<String, HarnessError> {
        let mut all: Vec<&str> = GIT_IDENTITY.to_vec();
        all.extend_from_slice(args);
        self.run_git(&all, None)
    }

    fn run_git(&self, args: &[&str], stdin: Option<&str>) -> Result<String, HarnessError> {
        use std::io::Write;
        let mut child = Command::new("git")
            .args(args)
            .current_dir(&self.root)
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_TERMINAL_PROMPT", "0")
            // Fixed dates make baseline commit ids reproducible.
            .env("GIT_AUTHOR_DATE", "2024-01-01T00:00:00Z")
            .env("GIT_COMMITTER_DATE", "2024-01-01T00:00:00Z")
            .stdin(if stdin.is_some() {
                Stdio::piped()
            } else {
                Stdio::null()
            })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::io(&self.root, e))?;
        if let Some(input) = stdin {
            let mut pipe = child.stdin.take().expect("piped stdin");
            pipe.write_all(input.as_bytes())
                .map_err(|e| HarnessError::io(&self.root, e))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| HarnessError::io(&self.root, e))?;
        if !out.status.success() {
            return Err(HarnessError::Git {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    /// Applies a unified diff to the working tree. Nothing is changed when
    /// any hunk fails.
    pub fn apply(&self, diff: &str) -> Result<(), HarnessError> {
        if diff.trim().is_empty() {
            return Ok(());
        }
        self.run_git(&["apply", "--whitespace=nowarn", "-"], Some(diff))
            .map(|_| ())
    }

    /// Everything changed since the baseline, untracked files included, with
    /// excluded paths removed.
    pub fn diff_against_baseline(&self) -> Result<String, HarnessError> {
        self.git(&["add", "-A"])?;
        let raw = self.git(&[
            "diff",
            "--cached",
            "--no-color",
            "--no-ext-diff",
            &self.baseline_ref,
        ])?;
        Ok(strip_excluded_sections(&raw))
    }
}

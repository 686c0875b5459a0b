//! A known-good Conduit backend used as an oracle for the whole pipeline.
//!
//! The layered variant splits into models, repositories, services and routes.
//! The monolithic variant is the same code concatenated into one file, so it
//! behaves identically but has no layers.

use std::path::Path;

use structbench_core::diff::{new_file_diff, NewFile};

use crate::HarnessError;

/// The generation task the golden solution satisfies.
pub const GOLDEN_TASK: &str = "flask-openapi-clean_architecture-sqlite-sqlalchemy";

macro_rules! golden_files {
    ($($path:literal),+ $(,)?) => {
        &[$(($path, include_str!(concat!("../assets/golden/", $path)))),+]
    };
}

/// Every file of the layered solution, in concatenation order for the
/// monolithic variant (entry point last).
const LAYERED: &[(&str, &str)] = golden_files!(
    "app/models/schema.py",
    "app/models/records.py",
    "app/repositories/clock.py",
    "app/repositories/users.py",
    "app/repositories/articles.py",
    "app/repositories/comments.py",
    "app/services/errors.py",
    "app/services/users.py",
    "app/services/profiles.py",
    "app/services/articles.py",
    "app/services/comments.py",
    "app/routes/endpoints.py",
    "app/routes/server.py",
    "main.py",
);

const RUN_SH: &str = include_str!("../assets/golden/run.sh");
const REQUIREMENTS: &str = include_str!("../assets/golden/requirements.txt");

pub const LAYERED_DIFF: &str = include_str!("../assets/layered.diff");
pub const MONOLITHIC_DIFF: &str = include_str!("../assets/monolithic.diff");

/// `(path, contents, executable)` for every file of the layered solution.
pub fn layered_files() -> Vec<(&'static str, &'static str, bool)> {
    let mut files: Vec<_> = LAYERED.iter().map(|&(p, c)| (p, c, false)).collect();
    files.push(("requirements.txt", REQUIREMENTS, false));
    files.push(("run.sh", RUN_SH, true));
    files.sort_by_key(|f| f.0);
    files
}

fn render(files: &[(&str, &str, bool)]) -> String {
    let files: Vec<NewFile<'_>> = files
        .iter()
        .map(|&(path, contents, executable)| NewFile {
            path,
            contents,
            executable,
        })
        .collect();
    new_file_diff(&files)
}

pub fn layered_diff() -> String {
    render(&layered_files())
}

/// The layered sources in one module: package imports are dropped (including
/// parenthesised multi-line ones) since every name is already in scope.
pub fn monolithic_source() -> String {
    let mut out = String::new();
    for (i, (_, contents)) in LAYERED.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut in_import = false;
        for line in contents.lines() {
            if in_import {
                in_import = line.trim() != ")";
                continue;
            }
            if line.starts_with("from app.") {
                in_import = line.trim_end().ends_with('(');
                continue;
            }
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn monolithic_run_sh() -> String {
    RUN_SH.replace("python3 main.py", "python3 server.py")
}

pub fn monolithic_diff() -> String {
    let source = monolithic_source();
    let run_sh = monolithic_run_sh();
    render(&[
        ("requirements.txt", REQUIREMENTS, false),
        ("run.sh", &run_sh, true),
        ("server.py", &source, false),
    ])
}

/// Lays out `diff` as the recorded patch for `task_id` under `dir`.
pub fn write_recorded(dir: &Path, task_id: &str, diff: &str) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(format!("{task_id}.diff"));
    std::fs::write(&path, diff).map_err(|e| HarnessError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Regenerate with STRUCTBENCH_BLESS=1 after editing the golden sources.
    #[test]
    fn shipped_diffs_are_in_sync() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
        if std::env::var_os("STRUCTBENCH_BLESS").is_some() {
            std::fs::write(root.join("layered.diff"), layered_diff()).unwrap();
            std::fs::write(root.join("monolithic.diff"), monolithic_diff()).unwrap();
            return;
        }
        assert!(LAYERED_DIFF == layered_diff(), "layered.diff is stale");
        assert!(
            MONOLITHIC_DIFF == monolithic_diff(),
            "monolithic.diff is stale"
        );
    }

    #[test]
    fn monolithic_has_no_package_imports() {
        let src = monolithic_source();
        assert!(!src.contains("from app."));
        assert!(src.contains("def build_server"));
        assert!(src.contains("def insert_user"));
    }
}

//! Unified-diff parsing and import extraction.
//!
//! Only added lines matter to the structural verifiers, so the parser keeps
//! per-file added lines with their new-file line numbers and drops context,
//! removals and binary entries.

use std::collections::BTreeMap;
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("line {line}: malformed hunk header `{text}`")]
    MalformedHunk { line: usize, text: String },
    #[error("line {line}: hunk content outside of a file section")]
    OrphanHunk { line: usize },
    #[error("line {line}: hunk body exceeds the line counts in its header")]
    HunkOverflow { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Javascript,
    Other,
}

impl Language {
    pub fn from_path(path: &str) -> Language {
        let name = path.rsplit('/').next().unwrap_or(path);
        let ext = match name.rsplit_once('.') {
            Some((_, ext)) => ext.to_ascii_lowercase(),
            None => return Language::Other,
        };
        match ext.as_str() {
            "py" => Language::Python,
            "js" | "mjs" | "cjs" | "ts" => Language::Javascript,
            _ => Language::Other,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Python => "python",
            Language::Javascript => "javascript",
            Language::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddedLine {
    /// 1-based line number in the new file.
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub language: Language,
    pub added_lines: Vec<AddedLine>,
}

impl FileChange {
    pub fn new(path: impl Into<String>) -> Self {
        let path = path.into();
        FileChange {
            language: Language::from_path(&path),
            path,
            added_lines: Vec::new(),
        }
    }

    pub fn added_text(&self) -> impl Iterator<Item = &str> {
        self.added_lines.iter().map(|l| l.text.as_str())
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }
}

/// Files touched by a patch, keyed and ordered by path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedDiff {
    pub files: Vec<FileChange>,
}

impl ParsedDiff {
    pub fn get(&self, path: &str) -> Option<&FileChange> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn total_added(&self) -> usize {
        self.files.iter().map(|f| f.added_lines.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Re-serializes the added lines as new-file hunks. Parsing the output
    /// yields the same files with the same added lines.
    pub fn to_diff_text(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            out.push_str(&format!("diff --git a/{0} b/{0}\n", file.path));
            out.push_str(&format!("--- a/{}\n+++ b/{}\n", file.path, file.path));
            let mut i = 0;
            while i < file.added_lines.len() {
                let start = file.added_lines[i].line;
                let mut j = i + 1;
                while j < file.added_lines.len()
                    && file.added_lines[j].line == file.added_lines[j - 1].line + 1
                {
                    j += 1;
                }
                out.push_str(&format!("@@ -0,0 +{},{} @@\n", start, j - i));
                for added in &file.added_lines[i..j] {
                    out.push('+');
                    out.push_str(&added.text);
                    out.push('\n');
                }
                i = j;
            }
        }
        out
    }
}

static HUNK_HEADER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap());

fn strip_path(raw: &str) -> Option<String> {
    // Timestamps follow a tab in classic diff output.
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    let raw = raw.trim_matches('"');
    if raw == "/dev/null" {
        return None;
    }
    let path = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(path.to_string())
}

fn git_header_path(rest: &str) -> Option<String> {
    // `diff --git a/x b/x`; take the b-side.
    let idx = rest.rfind(" b/")?;
    Some(rest[idx + 3..].trim_end().to_string())
}

struct Hunk {
    old_left: usize,
    new_left: usize,
    next_new: usize,
}

#[derive(Default)]
struct Builder {
    files: BTreeMap<String, FileChange>,
    current: Option<String>,
    pending_old: Option<Option<String>>,
    binary: bool,
}

impl Builder {
    fn start_file(&mut self, path: Option<String>) {
        self.current = path;
        self.binary = false;
        if let Some(p) = &self.current {
            self.files
                .entry(p.clone())
                .or_insert_with(|| FileChange::new(p.clone()));
        }
    }

    fn push(&mut self, line: usize, text: &str) {
        if self.binary {
            return;
        }
        if let Some(p) = &self.current {
            if let Some(file) = self.files.get_mut(p) {
                file.added_lines.push(AddedLine {
                    line,
                    text: text.to_string(),
                });
            }
        }
    }

    fn finish(mut self) -> ParsedDiff {
        let mut files: Vec<FileChange> = std::mem::take(&mut self.files).into_values().collect();
        for f in &mut files {
            f.added_lines.sort_by_key(|l| l.line);
        }
        ParsedDiff { files }
    }
}

/// Parses unified-diff text. Deleted files contribute nothing; binary
/// entries are dropped; repeated sections for one path are merged.
pub fn parse_patch(text: &str) -> Result<ParsedDiff, DiffError> {
    let mut b = Builder::default();
    let mut hunk: Option<Hunk> = None;
    let mut in_file = false;

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);

        if let Some(h) = &mut hunk {
            if h.old_left > 0 || h.new_left > 0 {
                match line.as_bytes().first() {
                    Some(b'+') => {
                        if h.new_left == 0 {
                            return Err(DiffError::HunkOverflow { line: lineno });
                        }
                        let n = h.next_new;
                        h.next_new += 1;
                        h.new_left -= 1;
                        b.push(n, &line[1..]);
                        continue;
                    }
                    Some(b'-') => {
                        if h.old_left == 0 {
                            return Err(DiffError::HunkOverflow { line: lineno });
                        }
                        h.old_left -= 1;
                        continue;
                    }
                    Some(b' ') => {
                        if h.old_left == 0 || h.new_left == 0 {
                            return Err(DiffError::HunkOverflow { line: lineno });
                        }
                        h.old_left -= 1;
                        h.new_left -= 1;
                        h.next_new += 1;
                        continue;
                    }
                    Some(b'\\') => continue,
                    None => {
                        // Some tools strip the trailing space of blank
                        // context lines.
                        if h.old_left > 0 && h.new_left > 0 {
                            h.old_left -= 1;
                            h.new_left -= 1;
                            h.next_new += 1;
                            continue;
                        }
                        hunk = None;
                        continue;
                    }
                    _ => {
                        hunk = None;
                    }
                }
            } else {
                if line.starts_with('\\') {
                    continue;
                }
                hunk = None;
            }
        }

        if let Some(rest) = line.strip_prefix("diff --git ") {
            b.start_file(git_header_path(rest));
            b.pending_old = None;
            in_file = true;
        } else if let Some(rest) = line.strip_prefix("--- ") {
            b.pending_old = Some(strip_path(rest));
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            let new_path = strip_path(rest);
            let current_before = b.current.clone();
            match new_path {
                Some(p) => {
                    if current_before.as_deref() != Some(p.as_str()) {
                        if let Some(old) = current_before {
                            // Drop the placeholder created from the git header.
                            if b.files.get(&old).is_some_and(|f| f.added_lines.is_empty()) {
                                b.files.remove(&old);
                            }
                        }
                        b.start_file(Some(p));
                    }
                }
                None => {
                    // Deletion.
                    if let Some(old) = current_before {
                        if b.files.get(&old).is_some_and(|f| f.added_lines.is_empty()) {
                            b.files.remove(&old);
                        }
                    }
                    b.current = None;
                }
            }
            b.pending_old = None;
            in_file = true;
        } else if line.starts_with("@@") {
            let caps = HUNK_HEADER
                .captures(line)
                .ok_or_else(|| DiffError::MalformedHunk {
                    line: lineno,
                    text: line.to_string(),
                })?;
            if !in_file {
                return Err(DiffError::OrphanHunk { line: lineno });
            }
            let num = |i: usize, default: usize| -> usize {
                caps.get(i)
                    .map(|m| m.as_str().parse().unwrap_or(usize::MAX))
                    .unwrap_or(default)
            };
            let old_count = num(2, 1);
            let new_start = num(3, 0);
            let new_count = num(4, 1);
            if old_count == usize::MAX || new_count == usize::MAX || new_start == usize::MAX {
                return Err(DiffError::MalformedHunk {
                    line: lineno,
                    text: line.to_string(),
                });
            }
            hunk = Some(Hunk {
                old_left: old_count,
                new_left: new_count,
                next_new: new_start.max(1),
            });
        } else if line.starts_with("Binary files ") || line == "GIT binary patch" {
            if let Some(p) = b.current.clone() {
                b.files.remove(&p);
            }
            b.binary = true;
        } else if line.starts_with("deleted file mode") {
            if let Some(p) = b.current.take() {
                b.files.remove(&p);
            }
        }
    }
    Ok(b.finish())
}

/// Path components and file suffixes removed before verification.
pub const EXCLUDED_COMPONENTS: [&str; 2] = ["node_modules", "__pycache__"];
pub const EXCLUDED_SUFFIXES: [&str; 1] = [".db"];
pub const LOCK_FILES: [&str; 5] = [
    "package-lock.json",
    "yarn.lock",
    "pnpm-lock.yaml",
    "uv.lock",
    "poetry.lock",
];

pub fn is_excluded_path(path: &str) -> bool {
    let mut components = path.split('/').filter(|c| !c.is_empty()).peekable();
    while let Some(c) = components.next() {
        if EXCLUDED_COMPONENTS.contains(&c) {
            return true;
        }
        if components.peek().is_none() {
            if LOCK_FILES.contains(&c) {
                return true;
            }
            let lower = c.to_ascii_lowercase();
            if EXCLUDED_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
                return true;
            }
        }
    }
    false
}

/// Removes dependency directories, bytecode caches, database files and lock
/// files.
pub fn apply_exclusions(diff: &ParsedDiff) -> ParsedDiff {
    ParsedDiff {
        files: diff
            .files
            .iter()
            .filter(|f| !is_excluded_path(&f.path))
            .cloned()
            .collect(),
    }
}

/// Drops whole `diff --git` sections whose path is excluded, leaving the
/// remaining text byte-for-byte intact.
pub fn strip_excluded_sections(diff_text: &str) -> String {
    let mut out = String::with_capacity(diff_text.len());
    let mut keep = true;
    for line in diff_text.split_inclusive('\n') {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            keep = match git_header_path(rest.trim_end_matches(['\n', '\r'])) {
                Some(p) => !is_excluded_path(&p),
                None => true,
            };
        }
        if keep {
            out.push_str(line);
        }
    }
    out
}

/// A file to be rendered as a brand-new file in a git patch.
#[derive(Debug, Clone)]
pub struct NewFile<'a> {
    pub path: &'a str,
    pub contents: &'a str,
    pub executable: bool,
}

/// Renders a git-style patch creating every file from scratch.
pub fn new_file_diff(files: &[NewFile<'_>]) -> String {
    let mut out = String::new();
    for file in files {
        let mode = if file.executable { "100755" } else { "100644" };
        out.push_str(&format!("diff --git a/{0} b/{0}\n", file.path));
        out.push_str(&format!("new file mode {mode}\n"));
        out.push_str("--- /dev/null\n");
        out.push_str(&format!("+++ b/{}\n", file.path));
        let lines: Vec<&str> = file.contents.split_inclusive('\n').collect();
        if lines.is_empty() {
            continue;
        }
        out.push_str(&format!("@@ -0,0 +1,{} @@\n", lines.len()));
        for l in &lines {
            out.push('+');
            out.push_str(l);
            if !l.ends_with('\n') {
                out.push_str("\n\\ No newline at end of file\n");
            }
        }
    }
    out
}

/// One import statement found in an added line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRef {
    pub path: String,
    pub line: usize,
    /// Module or package as written, for example `app.services.user` or
    /// `../repositories/userRepo`.
    pub target: String,
}

static PY_FROM: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*from\s+([A-Za-z_.][A-Za-z0-9_.]*)\s+import\b").unwrap());
static PY_IMPORT: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\s*import\s+(.+)$").unwrap());
static JS_REQUIRE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r#"\brequire\s*\(\s*['"]([^'"]+)['"]\s*\)"#).unwrap());
static JS_IMPORT_FROM: Lazy<Regex> =
    Lazy::new(|| Regex::new(r#"^\s*(?:import|export)\b.*?\bfrom\s*['"]([^'"]+)['"]"#).unwrap());
static JS_IMPORT_BARE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r#"^\s*import\s*['"]([^'"]+)['"]"#).unwrap());

/// Import targets of a single line of source.
pub fn line_imports(language: Language, text: &str) -> Vec<String> {
    match language {
        Language::Python => {
            if let Some(c) = PY_FROM.captures(text) {
                return vec![c[1].to_string()];
            }
            if let Some(c) = PY_IMPORT.captures(text) {
                let list = c[1].split('#').next().unwrap_or("");
                return list
                    .split(',')
                    .filter_map(|part| {
                        let module = part.split_whitespace().next()?;
                        let valid = module
                            .chars()
                            .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '.');
                        valid.then(|| module.to_string())
                    })
                    .collect();
            }
            Vec::new()
        }
        Language::Javascript => {
            let mut out = Vec::new();
            if let Some(c) = JS_IMPORT_FROM.captures(text) {
                out.push(c[1].to_string());
            } else if let Some(c) = JS_IMPORT_BARE.captures(text) {
                out.push(c[1].to_string());
            }
            for c in JS_REQUIRE.captures_iter(text) {
                out.push(c[1].to_string());
            }
            out
        }
        Language::Other => Vec::new(),
    }
}

/// Statically visible imports in the added lines of Python and
/// JavaScript files. Dynamic imports such as `importlib.import_module` or
/// `import()` expressions are not matched.
pub fn extract_imports(diff: &ParsedDiff) -> Vec<ImportRef> {
    let mut out = Vec::new();
    for file in &diff.files {
        for added in &file.added_lines {
            for target in line_imports(file.language, &added.text) {
                out.push(ImportRef {
                    path: file.path.clone(),
                    line: added.line,
                    target,
                });
            }
        }
    }
    out
}

//! Table-shaped summaries of a campaign, rendered as CSV, JSON and aligned
//! text.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};
use structbench_core::metrics::{
    assert_pct_refs, marginal_effect, mean_pass_at_k, ConstraintAxis, MetricsError, RunScore,
};
use structbench_core::task::{ConstraintLevel, Framework};
use structbench_harness::taxonomy::{
    aggregate_taxonomy, assemble_evidence, FailureLabel, Judge, RuleJudge, DEFAULT_TURNS,
};
use structbench_harness::{load_results, HarnessError, RunRecord};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Results(#[from] HarnessError),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableKind {
    APctByLevel,
    PassAt1ByLevel,
    APctByFramework,
    MarginalEffects,
    RawVsEnforced,
    Taxonomy,
}

impl TableKind {
    pub const ALL: [TableKind; 6] = [
        TableKind::APctByLevel,
        TableKind::PassAt1ByLevel,
        TableKind::APctByFramework,
        TableKind::MarginalEffects,
        TableKind::RawVsEnforced,
        TableKind::Taxonomy,
    ];

    /// The tables `metrics` writes; everything except the taxonomy.
    pub const METRICS: [TableKind; 5] = [
        TableKind::APctByLevel,
        TableKind::PassAt1ByLevel,
        TableKind::APctByFramework,
        TableKind::MarginalEffects,
        TableKind::RawVsEnforced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::APctByLevel => "a_pct_by_level",
            TableKind::PassAt1ByLevel => "pass_at_1_by_level",
            TableKind::APctByFramework => "a_pct_by_framework",
            TableKind::MarginalEffects => "marginal_effects",
            TableKind::RawVsEnforced => "raw_vs_enforced",
            TableKind::Taxonomy => "taxonomy",
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TableKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| ReportError::UnknownTable(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub kind: TableKind,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    fn new(kind: TableKind, title: &str, columns: &[&str]) -> Self {
        Table {
            kind,
            title: title.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| ReportError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.iter().map(|v| Value::String(v.clone())))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "table": self.kind.name(),
            "title": self.title,
            "columns": self.columns,
            "rows": rows,
            "notes": self.notes,
        })
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                // Text columns left-aligned, numbers right-aligned.
                if cell.parse::<f64>().is_ok() || cell == "-" {
                    let _ = write!(s, "{cell:>w$}");
                } else {
                    let _ = write!(s, "{cell:<w$}");
                }
            }
            s.trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.columns));
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub tables: Vec<Table>,
}

impl ReportBundle {
    pub fn table(&self, kind: TableKind) -> Option<&Table> {
        self.tables.iter().find(|t| t.kind == kind)
    }

    pub fn to_text(&self) -> String {
        self.tables
            .iter()
            .map(Table::to_text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Writes `<table>.csv`, `<table>.json` and `<table>.txt` for every table.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let write = |path: PathBuf, text: String| -> Result<PathBuf, ReportError> {
            std::fs::write(&path, text).map_err(|source| ReportError::Write {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        };
        std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Write {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for t in &self.tables {
            let name = t.kind.name();
            written.push(write(out_dir.join(format!("{name}.csv")), t.to_csv()?)?);
            let json = serde_json::to_string_pretty(&t.to_json()).expect("table serializes") + "\n";
            written.push(write(out_dir.join(format!("{name}.json")), json)?);
            written.push(write(out_dir.join(format!("{name}.txt")), t.to_text())?);
        }
        Ok(written)
    }
}

/// One decimal, never `-0.0`.
pub fn pct1(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

struct Scored<'a> {
    record: &'a RunRecord,
    score: RunScore,
}

type ConfigKey = (String, String);

fn configs<'a, 'b>(runs: &'b [Scored<'a>]) -> BTreeMap<ConfigKey, Vec<&'b Scored<'a>>> {
    let mut out: BTreeMap<ConfigKey, Vec<&Scored>> = BTreeMap::new();
    for r in runs {
        out.entry((r.record.agent.clone(), r.record.model.clone()))
            .or_default()
            .push(r);
    }
    out
}

fn cell(value: Result<f64, MetricsError>) -> String {
    value.map(pct1).unwrap_or_else(|_| "-".to_string())
}

fn a_pct(runs: &[&Scored], enforced: bool) -> Result<f64, MetricsError> {
    let scores: Vec<&RunScore> = runs.iter().map(|r| &r.score).collect();
    assert_pct_refs(&scores, enforced)
}

fn pass_at_1(runs: &[&Scored]) -> Result<f64, MetricsError> {
    let scores: Vec<&RunScore> = runs.iter().map(|r| &r.score).collect();
    mean_pass_at_k(&scores, 1).map(|p| p * 100.0)
}

fn by_level<F>(kind: TableKind, title: &str, runs: &[Scored], metric: F) -> Table
where
    F: Fn(&[&Scored]) -> Result<f64, MetricsError>,
{
    let mut t = Table::new(
        kind,
        title,
        &["agent", "model", "L0", "L1", "L2", "L3", "all"],
    );
    for ((agent, model), rs) in configs(runs) {
        let mut row = vec![agent, model];
        for level in ConstraintLevel::ALL {
            let subset: Vec<&Scored> = rs
                .iter()
                .copied()
                .filter(|r| r.record.level == level)
                .collect();
            row.push(cell(metric(&subset)));
        }
        row.push(cell(metric(&rs)));
        t.rows.push(row);
    }
    t
}

fn a_pct_by_framework(runs: &[Scored]) -> Table {
    let present: Vec<Framework> = Framework::ALL
        .into_iter()
        .filter(|f| runs.iter().any(|r| r.record.framework == *f))
        .collect();
    let mut columns = vec!["agent", "model"];
    columns.extend(present.iter().map(|f| f.name()));
    let mut t = Table::new(
        TableKind::APctByFramework,
        "Enforced A% by framework",
        &columns,
    );
    for ((agent, model), rs) in configs(runs) {
        let mut row = vec![agent, model];
        for f in &present {
            let subset: Vec<&Scored> = rs
                .iter()
                .copied()
                .filter(|r| r.record.framework == *f)
                .collect();
            row.push(cell(a_pct(&subset, true)));
        }
        t.rows.push(row);
    }
    t
}

fn marginal_effects(runs: &[Scored]) -> Table {
    let mut t = Table::new(
        TableKind::MarginalEffects,
        "Marginal effect of each constraint on enforced A% (percentage points)",
        &["constraint", "mean_delta_pp", "stderr_pp", "pairs", "note"],
    );
    let scores: Vec<RunScore> = runs.iter().map(|r| r.score.clone()).collect();
    for axis in ConstraintAxis::ALL {
        let row = match marginal_effect(&scores, axis, true) {
            Ok(e) => vec![
                axis.to_string(),
                pct1(e.mean_delta),
                e.stderr.map(pct1).unwrap_or_else(|| "-".into()),
                e.pairs.to_string(),
                String::new(),
            ],
            Err(_) => vec![
                axis.to_string(),
                "-".into(),
                "-".into(),
                "0".into(),
                "no matched pairs".into(),
            ],
        };
        t.rows.push(row);
    }
    if t.rows.iter().all(|r| r[3] == "0") {
        t.rows = vec![vec![
            "-".into(),
            "-".into(),
            "-".into(),
            "0".into(),
            "warning: campaign has no matched pairs; table omitted".into(),
        ]];
    }
    t.notes.push(
        "stderr is the standard error of all pair deltas pooled across configurations".into(),
    );
    t
}

fn raw_vs_enforced(runs: &[Scored]) -> Table {
    let mut t = Table::new(
        TableKind::RawVsEnforced,
        "Raw vs verifier-enforced A%",
        &[
            "agent",
            "model",
            "level",
            "runs",
            "non_compliant",
            "raw_a_pct",
            "enforced_a_pct",
            "difference_pp",
        ],
    );
    for ((agent, model), rs) in configs(runs) {
        let groups = ConstraintLevel::ALL
            .into_iter()
            .map(|l| (l.to_string(), Some(l)))
            .chain([("all".to_string(), None)]);
        for (label, level) in groups {
            let subset: Vec<&Scored> = rs
                .iter()
                .copied()
                .filter(|r| level.is_none_or(|l| r.record.level == l))
                .collect();
            if subset.is_empty() {
                continue;
            }
            let raw = a_pct(&subset, false).expect("non-empty");
            let enforced = a_pct(&subset, true).expect("non-empty");
            t.rows.push(vec![
                agent.clone(),
                model.clone(),
                label,
                subset.len().to_string(),
                subset
                    .iter()
                    .filter(|r| !r.score.compliant)
                    .count()
                    .to_string(),
                pct1(raw),
                pct1(enforced),
                pct1(enforced - raw),
            ]);
        }
    }
    t
}

/// Labels every failed, scored run with the rule judge.
pub fn judge_failures(records: &[RunRecord]) -> Vec<FailureLabel> {
    records
        .iter()
        .filter(|r| r.status.is_scored())
        .filter_map(|r| assemble_evidence(r, &[], DEFAULT_TURNS).ok())
        .map(|e| RuleJudge.label(&e))
        .collect()
}

pub fn taxonomy_table(labels: &[FailureLabel], source: &str) -> Table {
    let mut t = Table::new(
        TableKind::Taxonomy,
        "Failure taxonomy",
        &["level", "category", "count", "pct"],
    );
    let agg = aggregate_taxonomy(labels);
    for c in &agg.coarse {
        t.rows.push(vec![
            "coarse".into(),
            c.category.clone(),
            c.count.to_string(),
            pct1(c.pct),
        ]);
    }
    for c in &agg.sub {
        t.rows.push(vec![
            "logic_error".into(),
            c.category.clone(),
            c.count.to_string(),
            pct1(c.pct),
        ]);
    }
    if labels.is_empty() {
        t.rows.push(vec![
            "-".into(),
            "warning: no failed runs".into(),
            "0".into(),
            "-".into(),
        ]);
    }
    t.notes.push(format!(
        "{} failed runs, {} logic errors; coarse shares over failed runs, subcategories over logic errors; labels from {source}",
        agg.failed_runs, agg.logic_errors
    ));
    t
}

/// Builds the selected tables from records (and labels, for the taxonomy).
/// Runs that were not scored, such as skipped PostgreSQL runs, are left out.
pub fn build_report(
    records: &[RunRecord],
    labels: Option<&[FailureLabel]>,
    selection: &[TableKind],
) -> ReportBundle {
    let scored: Vec<Scored> = records
        .iter()
        .filter(|r| r.status.is_scored())
        .map(|r| Scored {
            record: r,
            score: r.score(),
        })
        .collect();
    let mut selection = selection.to_vec();
    selection.sort();
    selection.dedup();
    let tables = selection
        .into_iter()
        .map(|kind| match kind {
            TableKind::APctByLevel => {
                by_level(kind, "Enforced A% by constraint level", &scored, |r| {
                    a_pct(r, true)
                })
            }
            TableKind::PassAt1ByLevel => {
                by_level(kind, "pass@1 (%) by constraint level", &scored, pass_at_1)
            }
            TableKind::APctByFramework => a_pct_by_framework(&scored),
            TableKind::MarginalEffects => marginal_effects(&scored),
            TableKind::RawVsEnforced => raw_vs_enforced(&scored),
            TableKind::Taxonomy => match labels {
                Some(l) => taxonomy_table(l, "the supplied label file"),
                None => taxonomy_table(&judge_failures(records), "the rule judge"),
            },
        })
        .collect();
    ReportBundle { tables }
}

/// Loads a results directory and builds the selected tables.
pub fn report(
    results_dir: &Path,
    labels: Option<&[FailureLabel]>,
    selection: &[TableKind],
) -> Result<ReportBundle, ReportError> {
    let (_, records) = load_results(results_dir)?;
    Ok(build_report(&records, labels, selection))
}

//! Two-level failure taxonomy: labels, evidence bundles, a judge interface
//! and aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use structbench_core::metrics::{
    classification_report, cohen_kappa, ClassificationReport, MetricsError,
};
use structbench_http::suite::FolderSummary;
use thiserror::Error;

use crate::pipeline::tail;
use crate::record::RunRecord;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("run {0} passed; evidence is only assembled for failures")]
    NotAFailure(String),
    #[error("label for {run_id}: {reason}")]
    InvalidLabel { run_id: String, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("run ids differ (only in judge labels: {only_judge:?}; only in human labels: {only_human:?})")]
    IdMismatch {
        only_judge: Vec<String>,
        only_human: Vec<String>,
    },
    #[error("duplicate label for {0}")]
    Duplicate(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! label_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($name)))
            }
        }
    };
}

label_enum!(CoarseCategory {
    LogicError => "logic_error",
    ServerStartupFailure => "server_startup_failure",
    IncompleteImplementation => "incomplete_implementation",
    SchemaFormatError => "schema_format_error",
    StuckInLoop => "stuck_in_loop",
    ConstraintViolation => "constraint_violation",
});

label_enum!(LogicSubcategory {
    FrameworkIdiosyncrasy => "framework_idiosyncrasy",
    IncorrectQueryLogic => "incorrect_query_logic",
    DatabaseRuntimeError => "database_runtime_error",
    AuthMisconfiguration => "auth_misconfiguration",
    BusinessLogicDefect => "business_logic_defect",
    StatePropagationFailure => "state_propagation_failure",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Judge,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLabel {
    pub run_id: String,
    pub coarse: CoarseCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub: Option<LogicSubcategory>,
    #[serde(default)]
    pub rationale: String,
    pub source: LabelSource,
}

impl FailureLabel {
    /// A subcategory is present exactly when the coarse category is a logic
    /// error.
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let invalid = |reason: &str| TaxonomyError::InvalidLabel {
            run_id: self.run_id.clone(),
            reason: reason.to_string(),
        };
        match (self.coarse, self.sub) {
            (CoarseCategory::LogicError, None) => Err(invalid("logic_error needs a subcategory")),
            (CoarseCategory::LogicError, Some(_)) => Ok(()),
            (_, Some(_)) => Err(invalid("only logic_error takes a subcategory")),
            (_, None) => Ok(()),
        }
    }

    /// The finest class this label assigns: the subcategory for logic
    /// errors, the coarse category otherwise.
    pub fn finest(&self) -> String {
        match self.sub {
            Some(sub) => sub.name().to_string(),
            None => self.coarse.name().to_string(),
        }
    }
}

/// Reads labels from JSON lines, skipping blank lines.
pub fn read_labels(reader: impl BufRead) -> Result<Vec<FailureLabel>, TaxonomyError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let label: FailureLabel =
            serde_json::from_str(&line).map_err(|source| TaxonomyError::Parse {
                line: i + 1,
                source,
            })?;
        label.validate()?;
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels(mut writer: impl Write, labels: &[FailureLabel]) -> Result<(), TaxonomyError> {
    for l in labels {
        serde_json::to_writer(&mut writer, l).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One trajectory turn of an agent session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub content: String,
}

pub const DEFAULT_TURNS: usize = 20;
const LOG_TAIL_BYTES: usize = 4 * 1024;
const MAX_LISTED_FAILURES: usize = 10;

/// What a judge sees about one failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub run_id: String,
    pub last_turns: Vec<Turn>,
    /// Passed/total per folder plus the first few failing assertions.
    pub test_summary: TestDigest,
    pub server_log_tail: String,
    pub verifier_summary: String,
    pub patch_applied: bool,
    /// Files touched by the patch.
    pub patch_files: usize,
    pub health_ok: bool,
    pub structurally_compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDigest {
    pub passed: usize,
    pub total: usize,
    pub folders: Vec<FolderSummary>,
    pub first_failures: Vec<String>,
}

/// Builds the evidence bundle for a failed run. Only the last `n_turns`
/// turns are kept.
pub fn assemble_evidence(
    run: &RunRecord,
    trajectory: &[Turn],
    n_turns: usize,
) -> Result<EvidenceBundle, TaxonomyError> {
    if run.full_pass() {
        return Err(TaxonomyError::NotAFailure(run.run_id.clone()));
    }
    let skip = trajectory.len().saturating_sub(n_turns);
    let first_failures = run
        .suite
        .failures()
        .take(MAX_LISTED_FAILURES)
        .map(|f| format!("{} / {} #{}: {}", f.folder, f.request, f.index, f.detail))
        .collect();
    let mut verifier_summary = String::new();
    for r in &run.verifier_reports {
        let verdict = if r.compliant { "compliant" } else { "violated" };
        verifier_summary.push_str(&format!("{}: {verdict}\n", r.axis));
        for v in r.violations.iter().take(MAX_LISTED_FAILURES) {
            verifier_summary.push_str(&format!("  - {}\n", v.description));
        }
    }
    let server_log = run
        .logs
        .split_once("[server log]\n")
        .map(|(_, rest)| rest)
        .unwrap_or("");
    Ok(EvidenceBundle {
        run_id: run.run_id.clone(),
        last_turns: trajectory[skip..].to_vec(),
        test_summary: TestDigest {
            passed: run.suite.assertions_passed,
            total: run.suite.assertions_total,
            folders: run.suite.folder_summary(),
            first_failures,
        },
        server_log_tail: tail(server_log, LOG_TAIL_BYTES),
        verifier_summary,
        patch_applied: run.patch_applied,
        patch_files: run.patch.files.len(),
        health_ok: run.health_ok,
        structurally_compliant: run.structurally_compliant,
    })
}

/// Assigns a failure label from evidence.
pub trait Judge {
    fn label(&self, evidence: &EvidenceBundle) -> FailureLabel;
}

/// Deterministic heuristics; a stand-in for a model-backed judge.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl Judge for RuleJudge {
    fn label(&self, e: &EvidenceBundle) -> FailureLabel {
        let label = |coarse, sub, rationale: &str| FailureLabel {
            run_id: e.run_id.clone(),
            coarse,
            sub,
            rationale: rationale.to_string(),
            source: LabelSource::Judge,
        };
        let repeated = e.last_turns.len() >= 3
            && e.last_turns
                .windows(2)
                .rev()
                .take(2)
                .all(|w| w[0].content == w[1].content);
        if repeated {
            return label(
                CoarseCategory::StuckInLoop,
                None,
                "final turns repeat verbatim",
            );
        }
        if !e.patch_applied || e.patch_files == 0 {
            return label(
                CoarseCategory::IncompleteImplementation,
                None,
                "patch missing or not applicable",
            );
        }
        if !e.health_ok {
            return label(
                CoarseCategory::ServerStartupFailure,
                None,
                "server never passed the health check",
            );
        }
        let t = &e.test_summary;
        if t.total > 0 && t.passed == t.total {
            return label(
                CoarseCategory::ConstraintViolation,
                None,
                "behavior correct but a structural verifier failed",
            );
        }
        let failures = t.first_failures.join("\n");
        if failures.contains("response body is not JSON") || failures.contains("expected type") {
            return label(
                CoarseCategory::SchemaFormatError,
                None,
                "responses do not match the schema",
            );
        }
        if t.passed * 2 < t.total && failures.contains("got 404") {
            return label(
                CoarseCategory::IncompleteImplementation,
                None,
                "most endpoints missing",
            );
        }
        let sub = if failures.contains("got 401") || failures.contains("got 403") {
            LogicSubcategory::AuthMisconfiguration
        } else if e.server_log_tail.contains("OperationalError")
            || e.server_log_tail.contains("SequelizeDatabaseError")
        {
            LogicSubcategory::DatabaseRuntimeError
        } else if failures.contains("state_transition") || failures.contains("prior") {
            LogicSubcategory::StatePropagationFailure
        } else {
            LogicSubcategory::BusinessLogicDefect
        };
        label(
            CoarseCategory::LogicError,
            Some(sub),
            "assertions fail on a running server",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: String,
    pub count: usize,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyTables {
    pub failed_runs: usize,
    pub logic_errors: usize,
    /// Percent of all failed runs.
    pub coarse: Vec<CategoryShare>,
    /// Percent of logic errors.
    pub sub: Vec<CategoryShare>,
}

fn shares<T: Copy + Ord + fmt::Display>(
    all: &[T],
    counts: &BTreeMap<T, usize>,
    denom: usize,
) -> Vec<CategoryShare> {
    if denom == 0 {
        return Vec::new();
    }
    all.iter()
        .map(|c| {
            let count = counts.get(c).copied().unwrap_or(0);
            CategoryShare {
                category: c.to_string(),
                count,
                pct: 100.0 * count as f64 / denom as f64,
            }
        })
        .collect()
}

pub fn aggregate_taxonomy(labels: &[FailureLabel]) -> TaxonomyTables {
    let mut coarse: BTreeMap<CoarseCategory, usize> = BTreeMap::new();
    let mut sub: BTreeMap<LogicSubcategory, usize> = BTreeMap::new();
    for l in labels {
        *coarse.entry(l.coarse).or_default() += 1;
        if let (CoarseCategory::LogicError, Some(s)) = (l.coarse, l.sub) {
            *sub.entry(s).or_default() += 1;
        }
    }
    let logic = coarse
        .get(&CoarseCategory::LogicError)
        .copied()
        .unwrap_or(0);
    TaxonomyTables {
        failed_runs: labels.len(),
        logic_errors: logic,
        coarse: shares(CoarseCategory::ALL, &coarse, labels.len()),
        sub: shares(LogicSubcategory::ALL, &sub, logic),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeValidation {
    pub n: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub report: ClassificationReport,
}

fn by_id(labels: &[FailureLabel]) -> Result<BTreeMap<&str, &FailureLabel>, TaxonomyError> {
    let mut out = BTreeMap::new();
    for l in labels {
        if out.insert(l.run_id.as_str(), l).is_some() {
            return Err(TaxonomyError::Duplicate(l.run_id.clone()));
        }
    }
    Ok(out)
}

/// Agreement of judge labels with human labels on the finest class.
pub fn validate_judge(
    judge: &[FailureLabel],
    human: &[FailureLabel],
) -> Result<JudgeValidation, TaxonomyError> {
    let j = by_id(judge)?;
    let h = by_id(human)?;
    let jk: BTreeSet<&str> = j.keys().copied().collect();
    let hk: BTreeSet<&str> = h.keys().copied().collect();
    if jk != hk || jk.is_empty() {
        return Err(TaxonomyError::IdMismatch {
            only_judge: jk.difference(&hk).map(|s| s.to_string()).collect(),
            only_human: hk.difference(&jk).map(|s| s.to_string()).collect(),
        });
    }
    let truth: Vec<String> = h.values().map(|l| l.finest()).collect();
    let predicted: Vec<String> = j.values().map(|l| l.finest()).collect();
    let agree = truth.iter().zip(&predicted).filter(|(a, b)| a == b).count();
    let kappa = match cohen_kappa(&truth, &predicted) {
        Ok(k) => k,
        // Both raters used one identical class throughout.
        Err(MetricsError::UndefinedKappa) if agree == truth.len() => 1.0,
        Err(e) => return Err(e.into()),
    };
    Ok(JudgeValidation {
        n: truth.len(),
        accuracy: 100.0 * agree as f64 / truth.len() as f64,
        kappa,
        report: classification_report(&truth, &predicted)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logic(id: &str, sub: LogicSubcategory) -> FailureLabel {
        FailureLabel {
            run_id: id.into(),
            coarse: CoarseCategory::LogicError,
            sub: Some(sub),
            rationale: String::new(),
            source: LabelSource::Human,
        }
    }

    #[test]
    fn sub_presence_is_validated() {
        let mut l = logic("r", LogicSubcategory::BusinessLogicDefect);
        assert!(l.validate().is_ok());
        l.sub = None;
        assert!(l.validate().is_err());
        l.coarse = CoarseCategory::StuckInLoop;
        assert!(l.validate().is_ok());
        l.sub = Some(LogicSubcategory::BusinessLogicDefect);
        assert!(l.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let labels = vec![
            logic("a", LogicSubcategory::IncorrectQueryLogic),
            FailureLabel {
                run_id: "b".into(),
                coarse: CoarseCategory::ServerStartupFailure,
                sub: None,
                rationale: "crash".into(),
                source: LabelSource::Judge,
            },
        ];
        let mut buf = Vec::new();
        write_labels(&mut buf, &labels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .contains("\"coarse\":\"server_startup_failure\""));
        assert!(!text.lines().nth(1).unwrap().contains("\"sub\""));
        assert_eq!(read_labels(&buf[..]).unwrap(), labels);
        let bad = br#"{"run_id":"x","coarse":"logic_error","source":"judge"}"#;
        assert!(read_labels(&bad[..]).is_err());
    }

    #[test]
    fn empty_aggregation() {
        let t = aggregate_taxonomy(&[]);
        assert_eq!(t.failed_runs, 0);
        assert!(t.coarse.is_empty() && t.sub.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn shares_sum_to_hundred(picks in proptest::collection::vec((0usize..6, 0usize..6), 1..60)) {
            let labels: Vec<FailureLabel> = picks
                .iter()
                .enumerate()
                .map(|(i, &(c, s))| {
                    let coarse = CoarseCategory::ALL[c];
                    FailureLabel {
                        run_id: format!("r{i}"),
                        coarse,
                        sub: (coarse == CoarseCategory::LogicError).then(|| LogicSubcategory::ALL[s]),
                        rationale: String::new(),
                        source: LabelSource::Judge,
                    }
                })
                .collect();
            let t = aggregate_taxonomy(&labels);
            let total: f64 = t.coarse.iter().map(|c| c.pct).sum();
            proptest::prop_assert!((total - 100.0).abs() < 1e-9);
            let counted: usize = t.sub.iter().map(|c| c.count).sum();
            proptest::prop_assert_eq!(counted, t.logic_errors);
            if t.logic_errors > 0 {
                let sub_total: f64 = t.sub.iter().map(|c| c.pct).sum();
                proptest::prop_assert!((sub_total - 100.0).abs() < 1e-9);
            }
        }
    }
}

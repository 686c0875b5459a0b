//! Scores, pass@k, matched-pair constraint effects and agreement statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{parse_task_id, ConstraintSet, Database, Framework, Runtime};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric is undefined over an empty set of runs")]
    Empty,
    #[error("pass@k requires 1 <= k <= n and c <= n (n={n}, c={c}, k={k})")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("no matched pairs for constraint {0}")]
    NoPairs(ConstraintAxis),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation is undefined for a constant input")]
    ConstantInput,
    #[error("kappa is undefined when expected agreement is 1")]
    UndefinedKappa,
}

/// Score of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub task_id: String,
    pub trial: u32,
    pub agent: String,
    pub model: String,
    pub raw_fraction: f64,
    pub compliant: bool,
    pub enforced_fraction: f64,
    pub full_pass: bool,
}

impl RunScore {
    pub fn new(
        task_id: impl Into<String>,
        trial: u32,
        agent: impl Into<String>,
        model: impl Into<String>,
        passed: usize,
        total: usize,
        compliant: bool,
    ) -> Self {
        let raw_fraction = if total == 0 {
            0.0
        } else {
            passed as f64 / total as f64
        };
        RunScore {
            task_id: task_id.into(),
            trial,
            agent: agent.into(),
            model: model.into(),
            raw_fraction,
            compliant,
            enforced_fraction: if compliant { raw_fraction } else { 0.0 },
            full_pass: total > 0 && passed == total && compliant,
        }
    }

    pub fn fraction(&self, enforced: bool) -> f64 {
        if enforced {
            self.enforced_fraction
        } else {
            self.raw_fraction
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn by_task<'a>(runs: &[&'a RunScore]) -> BTreeMap<&'a str, Vec<&'a RunScore>> {
    let mut out: BTreeMap<&str, Vec<&RunScore>> = BTreeMap::new();
    for r in runs {
        out.entry(r.task_id.as_str()).or_default().push(r);
    }
    out
}

/// A% in percent: mean fraction per task, then mean across tasks.
pub fn assert_pct(runs: &[RunScore], enforced: bool) -> Result<f64, MetricsError> {
    let refs: Vec<&RunScore> = runs.iter().collect();
    assert_pct_refs(&refs, enforced)
}

pub fn assert_pct_refs(runs: &[&RunScore], enforced: bool) -> Result<f64, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_task: Vec<f64> = by_task(runs)
        .values()
        .map(|rs| mean(&rs.iter().map(|r| r.fraction(enforced)).collect::<Vec<_>>()))
        .collect();
    Ok(mean(&per_task) * 100.0)
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, in product form.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k == 0 || k > n || c > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c,k)/C(n,k) = prod_{i=n-c+1}^{n} (1 - k/i)
    let mut ratio = 1.0;
    for i in (n - c + 1)..=n {
        ratio *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - ratio)
}

/// Mean over tasks of per-task pass@k.
pub fn mean_pass_at_k(runs: &[&RunScore], k: u64) -> Result<f64, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut values = Vec::new();
    for rs in by_task(runs).values() {
        let n = rs.len() as u64;
        let c = rs.iter().filter(|r| r.full_pass).count() as u64;
        values.push(pass_at_k(n, c, k)?);
    }
    Ok(mean(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintAxis {
    Architecture,
    Sqlite,
    Postgres,
    Sqlalchemy,
    Sequelize,
}

impl ConstraintAxis {
    pub const ALL: [ConstraintAxis; 5] = [
        ConstraintAxis::Architecture,
        ConstraintAxis::Sqlite,
        ConstraintAxis::Postgres,
        ConstraintAxis::Sqlalchemy,
        ConstraintAxis::Sequelize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintAxis::Architecture => "architecture",
            ConstraintAxis::Sqlite => "sqlite",
            ConstraintAxis::Postgres => "postgres",
            ConstraintAxis::Sqlalchemy => "sqlalchemy",
            ConstraintAxis::Sequelize => "sequelize",
        }
    }

    /// The constraint set with this axis removed, when `with` carries it and
    /// removing it leaves a valid set.
    pub fn remove_from(self, framework: Framework, with: &ConstraintSet) -> Option<ConstraintSet> {
        let mut without = *with;
        match self {
            ConstraintAxis::Architecture => {
                if !with.architecture {
                    return None;
                }
                without.architecture = false;
            }
            ConstraintAxis::Sqlite | ConstraintAxis::Postgres => {
                let db = if self == ConstraintAxis::Sqlite {
                    Database::Sqlite
                } else {
                    Database::Postgres
                };
                if with.database != db || with.orm {
                    return None;
                }
                without.database = Database::None;
            }
            ConstraintAxis::Sqlalchemy | ConstraintAxis::Sequelize => {
                let runtime = if self == ConstraintAxis::Sqlalchemy {
                    Runtime::Python312
                } else {
                    Runtime::Node20
                };
                if !with.orm || framework.runtime() != runtime {
                    return None;
                }
                without.orm = false;
            }
        }
        without.is_valid().then_some(without)
    }
}

impl fmt::Display for ConstraintAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub agent: String,
    pub model: String,
    pub with_task: String,
    pub without_task: String,
    /// Percentage points.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub constraint: ConstraintAxis,
    pub mean_delta: f64,
    /// Standard error of the mean over all pooled deltas; `None` for a
    /// single pair.
    pub stderr: Option<f64>,
    pub pairs: usize,
}

/// Matched pairs for one axis: within each (agent, model) configuration,
/// every task carrying the constraint paired with the task that differs only
/// by lacking it.
pub fn matched_pairs(
    runs: &[RunScore],
    constraint: ConstraintAxis,
    enforced: bool,
) -> Vec<MatchedPair> {
    let mut configs: BTreeMap<(&str, &str), Vec<&RunScore>> = BTreeMap::new();
    for r in runs {
        configs
            .entry((r.agent.as_str(), r.model.as_str()))
            .or_default()
            .push(r);
    }
    let mut pairs = Vec::new();
    for ((agent, model), rs) in configs {
        let tasks = by_task(&rs);
        for (task, with_runs) in &tasks {
            let Some((framework, with)) = parse_task_id(task) else {
                continue;
            };
            let Some(without) = constraint.remove_from(framework, &with) else {
                continue;
            };
            let without_id = crate::task::task_id(framework, &without);
            let Some(without_runs) = tasks.get(without_id.as_str()) else {
                continue;
            };
            let a = assert_pct_refs(with_runs, enforced).expect("non-empty");
            let b = assert_pct_refs(without_runs, enforced).expect("non-empty");
            pairs.push(MatchedPair {
                agent: agent.to_string(),
                model: model.to_string(),
                with_task: task.to_string(),
                without_task: without_id,
                delta: a - b,
            });
        }
    }
    pairs
}

/// Mean and standard error of matched-pair deltas pooled across pairs and
/// configurations.
pub fn marginal_effect(
    runs: &[RunScore],
    constraint: ConstraintAxis,
    enforced: bool,
) -> Result<MarginalEffect, MetricsError> {
    let deltas: Vec<f64> = matched_pairs(runs, constraint, enforced)
        .into_iter()
        .map(|p| p.delta)
        .collect();
    effect_from_deltas(constraint, &deltas)
}

pub fn effect_from_deltas(
    constraint: ConstraintAxis,
    deltas: &[f64],
) -> Result<MarginalEffect, MetricsError> {
    if deltas.is_empty() {
        return Err(MetricsError::NoPairs(constraint));
    }
    let n = deltas.len();
    let m = mean(deltas);
    let stderr = (n >= 2).then(|| {
        let var = deltas.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        var.sqrt() / (n as f64).sqrt()
    });
    Ok(MarginalEffect {
        constraint,
        mean_delta: m,
        stderr,
        pairs: n,
    })
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; ties share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricsError::TooFewPoints(x.len()));
    }
    Ok(Correlation {
        pearson: pearson(x, y)?,
        spearman: pearson(&average_ranks(x), &average_ranks(y))?,
    })
}

pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut ca: BTreeMap<&T, f64> = BTreeMap::new();
    let mut cb: BTreeMap<&T, f64> = BTreeMap::new();
    for x in a {
        *ca.entry(x).or_default() += 1.0;
    }
    for y in b {
        *cb.entry(y).or_default() += 1.0;
    }
    let pe: f64 = ca
        .iter()
        .map(|(k, va)| va / n * cb.get(k).copied().unwrap_or(0.0) / n)
        .sum();
    let po = agree / n;
    if (1.0 - pe).abs() < 1e-15 {
        return Err(MetricsError::UndefinedKappa);
    }
    Ok((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when the class was never predicted; precision is reported as 0.
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total: usize,
}

/// Per-class precision, recall and F1 in percent, plus macro averages over
/// every class seen in either labeling.
pub fn classification_report<T: Ord + fmt::Display>(
    truth: &[T],
    predicted: &[T],
) -> Result<ClassificationReport, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let classes: BTreeSet<&T> = truth.iter().chain(predicted).collect();
    let mut rows = Vec::new();
    for class in classes {
        let tp = truth
            .iter()
            .zip(predicted)
            .filter(|(t, p)| *t == class && *p == class)
            .count() as f64;
        let support = truth.iter().filter(|t| *t == class).count();
        let predicted_n = predicted.iter().filter(|p| *p == class).count();
        let precision = if predicted_n == 0 {
            0.0
        } else {
            tp / predicted_n as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        rows.push(ClassScores {
            class: class.to_string(),
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
            support,
            precision_undefined: predicted_n == 0,
        });
    }
    let k = rows.len() as f64;
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(ClassificationReport {
        macro_precision: rows.iter().map(|r| r.precision).sum::<f64>() / k,
        macro_recall: rows.iter().map(|r| r.recall).sum::<f64>() / k,
        macro_f1: rows.iter().map(|r| r.f1).sum::<f64>() / k,
        accuracy: correct as f64 / truth.len() as f64 * 100.0,
        total: truth.len(),
        classes: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assert_pct_examples() {
        let run = RunScore::new("flask-openapi", 1, "a", "m", 200, 291, true);
        assert!((assert_pct(&[run], true).unwrap() - 68.7285).abs() < 1e-3);
        let run = RunScore::new("flask-openapi", 1, "a", "m", 291, 291, false);
        assert_eq!(assert_pct(std::slice::from_ref(&run), true).unwrap(), 0.0);
        assert_eq!(assert_pct(&[run], false).unwrap(), 100.0);
        assert_eq!(assert_pct(&[], true), Err(MetricsError::Empty));
    }

    #[test]
    fn per_task_mean_first() {
        // Task A: one run at 1.0; task B: three runs at 0.0.
        let runs = vec![
            RunScore::new("a", 1, "x", "m", 10, 10, true),
            RunScore::new("b", 1, "x", "m", 0, 10, true),
            RunScore::new("b", 2, "x", "m", 0, 10, true),
            RunScore::new("b", 3, "x", "m", 0, 10, true),
        ];
        assert_eq!(assert_pct(&runs, true).unwrap(), 50.0);
    }

    #[test]
    fn pass_at_k_examples() {
        assert_eq!(pass_at_k(3, 3, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(3, 0, 1).unwrap(), 0.0);
        assert!((pass_at_k(5, 2, 3).unwrap() - 0.9).abs() < 1e-12);
        assert!(pass_at_k(3, 1, 4).is_err());
    }

    #[test]
    fn two_deltas_stderr() {
        let e = effect_from_deltas(ConstraintAxis::Sqlite, &[-2.0, -4.0]).unwrap();
        assert_eq!(e.mean_delta, -3.0);
        assert!((e.stderr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(e.pairs, 2);
    }

    #[test]
    fn kappa_at_chance_is_zero() {
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert_eq!(cohen_kappa(&a, &b).unwrap(), 0.0);
        assert_eq!(
            cohen_kappa(&[1, 1], &[1, 1]),
            Err(MetricsError::UndefinedKappa)
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![1.5, 3.0, 1.5, 4.0]
        );
    }
}

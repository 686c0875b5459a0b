//! Static structural verifiers over the added lines of a patch.
//!
//! Three independent checks: layered architecture, database engine and ORM
//! usage. All of them are lexical; nothing is executed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{apply_exclusions, line_imports, FileChange, Language, ParsedDiff};
use crate::task::{ConstraintSet, Database, Framework, Orm, TaskSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AliasError {
    #[error("unknown layer `{0}` (expected models, repositories, services or routes)")]
    UnknownLayer(String),
    #[error("alias `{alias}` is assigned to both {first} and {second}")]
    Conflict {
        alias: String,
        first: LayerId,
        second: LayerId,
    },
    #[error("empty alias for layer {0}")]
    Empty(LayerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerId {
    Models,
    Repositories,
    Services,
    Routes,
}

impl LayerId {
    pub const ALL: [LayerId; 4] = [
        LayerId::Models,
        LayerId::Repositories,
        LayerId::Services,
        LayerId::Routes,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerId::Models => "models",
            LayerId::Repositories => "repositories",
            LayerId::Services => "services",
            LayerId::Routes => "routes",
        }
    }

    fn singular(self) -> &'static str {
        match self {
            LayerId::Models => "model",
            LayerId::Repositories => "repository",
            LayerId::Services => "service",
            LayerId::Routes => "route",
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerId {
    type Err = AliasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        LayerId::ALL
            .into_iter()
            .find(|l| l.name() == lower)
            .ok_or_else(|| AliasError::UnknownLayer(s.to_string()))
    }
}

/// Directory-name tokens mapped to layers. Lookups are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerAliases {
    map: BTreeMap<String, LayerId>,
}

impl Default for LayerAliases {
    fn default() -> Self {
        let mut per_layer = BTreeMap::new();
        per_layer.insert(
            LayerId::Routes,
            vec![
                "routes",
                "handlers",
                "routers",
                "views",
                "controllers",
                "api",
            ],
        );
        per_layer.insert(
            LayerId::Services,
            vec!["services", "usecases", "use_cases", "domain_services"],
        );
        per_layer.insert(
            LayerId::Repositories,
            vec![
                "repositories",
                "repository",
                "repos",
                "dal",
                "data_access",
                "persistence",
            ],
        );
        per_layer.insert(
            LayerId::Models,
            vec!["models", "entities", "schemas", "domain"],
        );
        let owned = per_layer
            .into_iter()
            .map(|(l, v)| (l, v.into_iter().map(String::from).collect()))
            .collect();
        LayerAliases::from_layers(&owned).expect("default aliases are disjoint")
    }
}

impl LayerAliases {
    pub fn from_layers(layers: &BTreeMap<LayerId, Vec<String>>) -> Result<Self, AliasError> {
        let mut map = BTreeMap::new();
        for (&layer, aliases) in layers {
            for alias in aliases {
                let key = alias.trim().to_ascii_lowercase();
                if key.is_empty() {
                    return Err(AliasError::Empty(layer));
                }
                if let Some(&first) = map.get(&key) {
                    if first != layer {
                        return Err(AliasError::Conflict {
                            alias: key,
                            first,
                            second: layer,
                        });
                    }
                }
                map.insert(key, layer);
            }
        }
        Ok(LayerAliases { map })
    }

    /// Defaults with the listed layers' alias sets replaced. Keys are layer
    /// names such as `"routes"`.
    pub fn with_overrides(overrides: &BTreeMap<String, Vec<String>>) -> Result<Self, AliasError> {
        let mut layers = LayerAliases::default().by_layer();
        for (name, aliases) in overrides {
            let layer: LayerId = name.parse()?;
            layers.insert(layer, aliases.clone());
        }
        LayerAliases::from_layers(&layers)
    }

    pub fn by_layer(&self) -> BTreeMap<LayerId, Vec<String>> {
        let mut out: BTreeMap<LayerId, Vec<String>> = BTreeMap::new();
        for (alias, &layer) in &self.map {
            out.entry(layer).or_default().push(alias.clone());
        }
        out
    }

    pub fn lookup(&self, component: &str) -> Option<LayerId> {
        self.map.get(&component.to_ascii_lowercase()).copied()
    }
}

/// Layer of a file: the first directory component (left to right) that
/// matches an alias. The file name itself is not considered.
pub fn classify_layer(path: &str, aliases: &LayerAliases) -> Option<LayerId> {
    let mut parts: Vec<&str> = path.split('/').filter(|c| !c.is_empty()).collect();
    parts.pop();
    parts.into_iter().find_map(|c| aliases.lookup(c))
}

/// Layer of an import target: the last alias-matching component after
/// splitting on `/` and `.`.
pub fn classify_import_target(target: &str, aliases: &LayerAliases) -> Option<LayerId> {
    target
        .split(['/', '.'])
        .rev()
        .filter(|c| !c.is_empty())
        .find_map(|c| aliases.lookup(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Architecture,
    Database,
    Orm,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Architecture => "architecture",
            Axis::Database => "database",
            Axis::Orm => "orm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub path: String,
    pub line: Option<usize>,
    #[serde(rename = "match")]
    pub matched: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub description: String,
    pub path: Option<String>,
    pub line: Option<usize>,
}

impl Violation {
    fn global(description: impl Into<String>) -> Self {
        Violation {
            description: description.into(),
            path: None,
            line: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub axis: Axis,
    pub compliant: bool,
    pub evidence: Vec<Evidence>,
    pub violations: Vec<Violation>,
}

pub fn verify_architecture(diff: &ParsedDiff, aliases: &LayerAliases) -> VerifierReport {
    let mut evidence = Vec::new();
    let mut violations = Vec::new();
    let mut present: BTreeSet<LayerId> = BTreeSet::new();

    for file in diff.files.iter().filter(|f| !f.added_lines.is_empty()) {
        let Some(layer) = classify_layer(&file.path, aliases) else {
            continue;
        };
        if present.insert(layer) {
            evidence.push(Evidence {
                path: file.path.clone(),
                line: None,
                matched: file.path.clone(),
                tag: format!("layer:{layer}"),
            });
        }
    }

    for file in &diff.files {
        let Some(source) = classify_layer(&file.path, aliases) else {
            continue;
        };
        for added in &file.added_lines {
            for target in line_imports(file.language, &added.text) {
                let Some(dest) = classify_import_target(&target, aliases) else {
                    continue;
                };
                if source.rank() < dest.rank() {
                    violations.push(Violation {
                        description: format!(
                            "{} imports {} (`{}`)",
                            source.singular(),
                            dest.name(),
                            target
                        ),
                        path: Some(file.path.clone()),
                        line: Some(added.line),
                    });
                }
            }
        }
    }

    if present.len() < 3 {
        let names: Vec<&str> = present.iter().map(|l| l.name()).collect();
        violations.insert(
            0,
            Violation::global(format!(
                "only {} of 4 layers present ({}); at least 3 required",
                present.len(),
                if names.is_empty() {
                    "none".to_string()
                } else {
                    names.join(", ")
                }
            )),
        );
    }

    VerifierReport {
        axis: Axis::Architecture,
        compliant: violations.is_empty(),
        evidence,
        violations,
    }
}

/// Which files a pattern is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Any,
    Python,
    Javascript,
    PackageJson,
    PythonDependencies,
}

impl Scope {
    fn admits(self, file: &FileChange) -> bool {
        match self {
            Scope::Any => true,
            Scope::Python => file.language == Language::Python,
            Scope::Javascript => file.language == Language::Javascript,
            Scope::PackageJson => file.file_name() == "package.json",
            Scope::PythonDependencies => is_python_dependency_file(file.file_name()),
        }
    }
}

fn is_python_dependency_file(name: &str) -> bool {
    (name.starts_with("requirements") && name.ends_with(".txt"))
        || matches!(
            name,
            "pyproject.toml" | "Pipfile" | "setup.py" | "setup.cfg"
        )
}

/// A tagged evidence regex.
#[derive(Debug, Clone)]
pub struct EvidencePattern {
    pub tag: &'static str,
    regex: Regex,
    scope: Scope,
}

impl EvidencePattern {
    fn new(tag: &'static str, pattern: &str, scope: Scope) -> Self {
        // Quoted package names in package.json are matched case-sensitively.
        let case_insensitive = scope != Scope::PackageJson;
        EvidencePattern {
            tag,
            regex: RegexBuilder::new(pattern)
                .case_insensitive(case_insensitive)
                .build()
                .expect("evidence pattern compiles"),
            scope,
        }
    }

    pub fn pattern(&self) -> &str {
        self.regex.as_str()
    }

    fn find<'t>(&self, file: &FileChange, text: &'t str) -> Option<&'t str> {
        if !self.scope.admits(file) {
            return None;
        }
        self.regex.find(text).map(|m| m.as_str())
    }
}

pub struct EvidencePatternSet {
    pub sqlite: Vec<EvidencePattern>,
    pub postgres: Vec<EvidencePattern>,
    pub sqlalchemy: Vec<EvidencePattern>,
    pub sequelize: Vec<EvidencePattern>,
}

pub static PATTERNS: Lazy<EvidencePatternSet> = Lazy::new(|| {
    use Scope::*;
    EvidencePatternSet {
        sqlite: vec![
            EvidencePattern::new(
                "python sqlite import",
                r"^\s*(?:import|from)\s+(?:sqlite3|aiosqlite)\b",
                Python,
            ),
            EvidencePattern::new("sqlite connection string", r"sqlite(?:\+\w+)?:///", Any),
            EvidencePattern::new(
                "django sqlite backend",
                r"django\.db\.backends\.sqlite3",
                Any,
            ),
            EvidencePattern::new(
                "node sqlite package",
                r#"(?:require\s*\(\s*|\bfrom\s*|^\s*import\s*)['"](?:better-)?sqlite3['"]"#,
                Javascript,
            ),
            EvidencePattern::new(
                "sqlite dependency",
                r#""(?:better-)?sqlite3"\s*:"#,
                PackageJson,
            ),
            EvidencePattern::new("sqlite dialect", r#"dialect\s*:\s*['"]sqlite['"]"#, Any),
        ],
        postgres: vec![
            EvidencePattern::new(
                "python postgres import",
                r"^\s*(?:import|from)\s+(?:psycopg2|asyncpg)\b",
                Python,
            ),
            EvidencePattern::new(
                "postgres connection string",
                r"postgresql(?:\+\w+)?://",
                Any,
            ),
            EvidencePattern::new(
                "sqlalchemy postgres dialect",
                r"sqlalchemy\.dialects\.postgresql",
                Any,
            ),
            EvidencePattern::new(
                "django postgres backend",
                r"django\.db\.backends\.postgresql",
                Any,
            ),
            EvidencePattern::new(
                "node postgres package",
                r#"(?:require\s*\(\s*|\bfrom\s*|^\s*import\s*)['"]pg(?:-promise)?['"]"#,
                Javascript,
            ),
            EvidencePattern::new(
                "postgres dependency",
                r#""pg(?:-promise)?"\s*:"#,
                PackageJson,
            ),
            EvidencePattern::new(
                "postgres dialect",
                r#"dialect\s*:\s*['"]postgres(?:ql)?['"]"#,
                Any,
            ),
            EvidencePattern::new(
                "postgres host reference",
                r#"@postgres\b|\bhost['"]?\s*[=:]\s*['"]?postgres\b|_host['"]?\s*[=:]\s*['"]?postgres\b"#,
                Any,
            ),
        ],
        sqlalchemy: vec![
            EvidencePattern::new("sqlalchemy import", r"^\s*import\s+sqlalchemy\b", Python),
            EvidencePattern::new(
                "sqlalchemy import",
                r"^\s*from\s+sqlalchemy(?:\.\w+)*\s+import\b",
                Python,
            ),
            EvidencePattern::new("sqlalchemy dependency", r"sqlalchemy", PythonDependencies),
        ],
        sequelize: vec![
            EvidencePattern::new(
                "sequelize import",
                r#"(?:require\s*\(\s*|\bfrom\s*|^\s*import\s*)['"]sequelize['"]"#,
                Javascript,
            ),
            EvidencePattern::new("sequelize instance", r"\bnew\s+Sequelize\s*\(", Javascript),
            EvidencePattern::new("sequelize dependency", r#""sequelize"\s*:"#, PackageJson),
        ],
    }
});

struct Hit {
    path: String,
    line: usize,
    matched: String,
    tag: &'static str,
}

fn scan(diff: &ParsedDiff, patterns: &[EvidencePattern]) -> Vec<Hit> {
    let mut hits = Vec::new();
    for file in &diff.files {
        for added in &file.added_lines {
            for p in patterns {
                if let Some(m) = p.find(file, &added.text) {
                    hits.push(Hit {
                        path: file.path.clone(),
                        line: added.line,
                        matched: m.to_string(),
                        tag: p.tag,
                    });
                }
            }
        }
    }
    hits
}

fn engine_patterns(db: Database) -> &'static [EvidencePattern] {
    match db {
        Database::Sqlite => &PATTERNS.sqlite,
        Database::Postgres => &PATTERNS.postgres,
        Database::None => &[],
    }
}

static DJANGO_DATABASES: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*DATABASES\s*(?:\[[^\]]*\]\s*)*=").unwrap());
static DJANGO_ENGINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"django\.db\.backends\.(sqlite3|postgresql)").unwrap());

fn is_django_settings(path: &str) -> bool {
    let name = path.rsplit('/').next().unwrap_or(path);
    name == "settings.py" || path.split('/').any(|c| c == "settings") && name.ends_with(".py")
}

/// For a Django settings file, the line of the last `DATABASES` assignment
/// when its engine is `expected`.
fn django_override_line(file: &FileChange, expected: Database) -> Option<usize> {
    if !is_django_settings(&file.path) {
        return None;
    }
    let idx = file
        .added_lines
        .iter()
        .rposition(|l| DJANGO_DATABASES.is_match(&l.text))?;
    let engine = file.added_lines[idx..]
        .iter()
        .find_map(|l| DJANGO_ENGINE.captures(&l.text).map(|c| c[1].to_string()))?;
    let engine = match engine.as_str() {
        "sqlite3" => Database::Sqlite,
        _ => Database::Postgres,
    };
    (engine == expected).then_some(file.added_lines[idx].line)
}

pub fn verify_database(diff: &ParsedDiff, expected: Database) -> VerifierReport {
    let alternative = match expected {
        Database::Sqlite => Database::Postgres,
        Database::Postgres => Database::Sqlite,
        Database::None => {
            return VerifierReport {
                axis: Axis::Database,
                compliant: true,
                evidence: Vec::new(),
                violations: Vec::new(),
            }
        }
    };
    let expected_name = expected.slug().unwrap_or_default();
    let alternative_name = alternative.slug().unwrap_or_default();

    let mut evidence: Vec<Evidence> = scan(diff, engine_patterns(expected))
        .into_iter()
        .map(|h| Evidence {
            path: h.path,
            line: Some(h.line),
            matched: h.matched,
            tag: format!("{expected_name}: {}", h.tag),
        })
        .collect();
    let has_expected = !evidence.is_empty();

    let overrides: BTreeMap<&str, usize> = diff
        .files
        .iter()
        .filter_map(|f| django_override_line(f, expected).map(|l| (f.path.as_str(), l)))
        .collect();

    let mut violations = Vec::new();
    for hit in scan(diff, engine_patterns(alternative)) {
        let forgiven = overrides
            .get(hit.path.as_str())
            .is_some_and(|&line| hit.line < line);
        if forgiven {
            evidence.push(Evidence {
                path: hit.path,
                line: Some(hit.line),
                matched: hit.matched,
                tag: format!("overridden {alternative_name}: {}", hit.tag),
            });
        } else {
            violations.push(Violation {
                description: format!(
                    "alternative database evidence ({alternative_name}: {}): `{}`",
                    hit.tag, hit.matched
                ),
                path: Some(hit.path),
                line: Some(hit.line),
            });
        }
    }
    if !has_expected {
        violations.insert(
            0,
            Violation::global(format!("no evidence of {expected_name} usage")),
        );
    }
    VerifierReport {
        axis: Axis::Database,
        compliant: violations.is_empty(),
        evidence,
        violations,
    }
}

pub fn verify_orm(diff: &ParsedDiff, expected: Orm) -> VerifierReport {
    let patterns = match expected {
        Orm::Sqlalchemy => &PATTERNS.sqlalchemy,
        Orm::Sequelize => &PATTERNS.sequelize,
    };
    let evidence: Vec<Evidence> = scan(diff, patterns)
        .into_iter()
        .map(|h| Evidence {
            path: h.path,
            line: Some(h.line),
            matched: h.matched,
            tag: format!("{}: {}", expected.slug(), h.tag),
        })
        .collect();
    let mut violations = Vec::new();
    if evidence.is_empty() {
        violations.push(Violation::global(format!(
            "no evidence of {} usage",
            expected.display_name()
        )));
    }
    VerifierReport {
        axis: Axis::Orm,
        compliant: violations.is_empty(),
        evidence,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub compliant: bool,
    pub reports: Vec<VerifierReport>,
}

impl ComplianceReport {
    pub fn report(&self, axis: Axis) -> Option<&VerifierReport> {
        self.reports.iter().find(|r| r.axis == axis)
    }
}

/// Runs the verifiers applicable to `constraints` after removing excluded
/// files. The result is the conjunction of the individual reports.
pub fn check_constraints(
    framework: Framework,
    constraints: &ConstraintSet,
    diff: &ParsedDiff,
    aliases: &LayerAliases,
) -> ComplianceReport {
    let diff = apply_exclusions(diff);
    let mut reports = Vec::new();
    if constraints.architecture {
        reports.push(verify_architecture(&diff, aliases));
    }
    if constraints.database != Database::None {
        reports.push(verify_database(&diff, constraints.database));
    }
    if constraints.orm {
        reports.push(verify_orm(&diff, framework.orm()));
    }
    ComplianceReport {
        compliant: reports.iter().all(|r| r.compliant),
        reports,
    }
}

pub fn structural_compliance(
    task: &TaskSpec,
    diff: &ParsedDiff,
    aliases: &LayerAliases,
) -> ComplianceReport {
    check_constraints(task.framework, &task.constraints, diff, aliases)
}

//! Constraint-variant matrix, prompt rendering and task documents.
//!
//! A task pairs one web framework with a set of structural constraints
//! (Clean Architecture, database engine, ORM). The prompt is assembled from
//! text fragments under `assets/templates/`; optional blocks are included only
//! when the matching constraint is active.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// The shipped Conduit OpenAPI contract.
pub const CONDUIT_OPENAPI: &str = include_str!("../assets/conduit-openapi.yml");

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown framework `{0}`")]
    UnknownFramework(String),
    #[error("invalid constraint set: {0}")]
    InvalidConstraints(String),
    #[error("unresolved placeholder `{{{name}}}` in template block `{block}`")]
    UnresolvedPlaceholder { block: String, name: String },
    #[error("template fragment `{name}`: {source}")]
    TemplateIo {
        name: String,
        #[source]
        source: std::io::Error,
    },
    #[error("task document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("task document is missing required field `{0}`")]
    MissingField(String),
    #[error("task document field `{field}` is invalid: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("expected a {expected} task but the document describes a {found} task")]
    KindMismatch { expected: TaskKind, found: TaskKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Flask,
    Fastapi,
    Django,
    Aiohttp,
    Express,
    Fastify,
    Hono,
    Koa,
}

impl Framework {
    pub const ALL: [Framework; 8] = [
        Framework::Flask,
        Framework::Fastapi,
        Framework::Django,
        Framework::Aiohttp,
        Framework::Express,
        Framework::Fastify,
        Framework::Hono,
        Framework::Koa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Flask => "flask",
            Framework::Fastapi => "fastapi",
            Framework::Django => "django",
            Framework::Aiohttp => "aiohttp",
            Framework::Express => "express",
            Framework::Fastify => "fastify",
            Framework::Hono => "hono",
            Framework::Koa => "koa",
        }
    }

    pub fn runtime(self) -> Runtime {
        match self {
            Framework::Flask | Framework::Fastapi | Framework::Django | Framework::Aiohttp => {
                Runtime::Python312
            }
            Framework::Express | Framework::Fastify | Framework::Hono | Framework::Koa => {
                Runtime::Node20
            }
        }
    }

    pub fn port(self) -> u16 {
        self.runtime().port()
    }

    pub fn dependency_file(self) -> &'static str {
        self.runtime().dependency_file()
    }

    pub fn orm(self) -> Orm {
        self.runtime().orm()
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        Framework::ALL
            .into_iter()
            .find(|fw| fw.name() == wanted)
            .ok_or_else(|| TaskError::UnknownFramework(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Runtime {
    Python312,
    Node20,
}

impl Runtime {
    /// Human-readable name substituted into the prompt.
    pub fn display_name(self) -> &'static str {
        match self {
            Runtime::Python312 => "Python 3.12",
            Runtime::Node20 => "Node.js",
        }
    }

    pub fn port(self) -> u16 {
        match self {
            Runtime::Python312 => 8080,
            Runtime::Node20 => 3000,
        }
    }

    pub fn dependency_file(self) -> &'static str {
        match self {
            Runtime::Python312 => "requirements.txt",
            Runtime::Node20 => "package.json",
        }
    }

    pub fn orm(self) -> Orm {
        match self {
            Runtime::Python312 => Orm::Sqlalchemy,
            Runtime::Node20 => Orm::Sequelize,
        }
    }

    fn package_manager(self) -> &'static str {
        match self {
            Runtime::Python312 => "pip",
            Runtime::Node20 => "npm",
        }
    }

    fn language(self) -> &'static str {
        match self {
            Runtime::Python312 => "Python",
            Runtime::Node20 => "Node.js",
        }
    }

    fn install_command(self) -> &'static str {
        match self {
            Runtime::Python312 => "uv pip install --system -r requirements.txt",
            Runtime::Node20 => "npm install",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Database {
    None,
    Sqlite,
    Postgres,
}

impl Database {
    pub fn slug(self) -> Option<&'static str> {
        match self {
            Database::None => None,
            Database::Sqlite => Some("sqlite"),
            Database::Postgres => Some("postgres"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orm {
    Sqlalchemy,
    Sequelize,
}

impl Orm {
    pub fn display_name(self) -> &'static str {
        match self {
            Orm::Sqlalchemy => "SQLAlchemy",
            Orm::Sequelize => "Sequelize",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Orm::Sqlalchemy => "sqlalchemy",
            Orm::Sequelize => "sequelize",
        }
    }
}

/// Which structural constraints are active for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub architecture: bool,
    pub database: Database,
    pub orm: bool,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet::BASELINE
    }
}

impl ConstraintSet {
    pub const BASELINE: ConstraintSet = ConstraintSet {
        architecture: false,
        database: Database::None,
        orm: false,
    };

    /// The ten valid constraint combinations in enumeration order.
    pub const VARIANTS: [ConstraintSet; 10] = [
        ConstraintSet::BASELINE,
        ConstraintSet::of(true, Database::None, false),
        ConstraintSet::of(false, Database::Sqlite, false),
        ConstraintSet::of(false, Database::Postgres, false),
        ConstraintSet::of(true, Database::Sqlite, false),
        ConstraintSet::of(true, Database::Postgres, false),
        ConstraintSet::of(false, Database::Sqlite, true),
        ConstraintSet::of(false, Database::Postgres, true),
        ConstraintSet::of(true, Database::Sqlite, true),
        ConstraintSet::of(true, Database::Postgres, true),
    ];

    const fn of(architecture: bool, database: Database, orm: bool) -> Self {
        ConstraintSet {
            architecture,
            database,
            orm,
        }
    }

    pub fn new(architecture: bool, database: Database, orm: bool) -> Result<Self, TaskError> {
        let set = ConstraintSet::of(architecture, database, orm);
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.orm && self.database == Database::None {
            return Err(TaskError::InvalidConstraints(
                "the ORM constraint requires a database constraint".into(),
            ));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn level(&self) -> ConstraintLevel {
        let active = usize::from(self.architecture)
            + usize::from(self.database != Database::None)
            + usize::from(self.orm);
        ConstraintLevel::from_count(active)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintLevel {
    L0,
    L1,
    L2,
    L3,
}

impl ConstraintLevel {
    pub const ALL: [ConstraintLevel; 4] = [
        ConstraintLevel::L0,
        ConstraintLevel::L1,
        ConstraintLevel::L2,
        ConstraintLevel::L3,
    ];

    fn from_count(active: usize) -> Self {
        match active {
            0 => ConstraintLevel::L0,
            1 => ConstraintLevel::L1,
            2 => ConstraintLevel::L2,
            _ => ConstraintLevel::L3,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ConstraintLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index())
    }
}

impl FromStr for ConstraintLevel {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L0" => Ok(ConstraintLevel::L0),
            "L1" => Ok(ConstraintLevel::L1),
            "L2" => Ok(ConstraintLevel::L2),
            "L3" => Ok(ConstraintLevel::L3),
            other => Err(TaskError::InvalidField {
                field: "level".into(),
                reason: format!("`{other}` is not one of L0..L3"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Generation,
    Feature,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Generation => "generation",
            TaskKind::Feature => "feature",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub url: String,
    pub commit: String,
}

/// Size of the code removed to create a feature task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub lines_removed: u64,
    pub files_affected: u64,
}

/// One generation or feature task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub framework: Framework,
    pub constraints: ConstraintSet,
    pub level: ConstraintLevel,
    pub prompt: String,
    /// Empty when the task was loaded from a document; the contract is
    /// already embedded at the top of `prompt`.
    pub openapi_spec: String,
    pub setup_commands: Vec<String>,
    pub ablation_patch: Option<String>,
    pub repo_ref: Option<RepoRef>,
    pub feature_metadata: Option<FeatureMetadata>,
}

/// `<framework>-openapi[-clean_architecture][-sqlite|-postgres][-<orm>]`
pub fn task_id(framework: Framework, constraints: &ConstraintSet) -> String {
    let mut id = format!("{}-openapi", framework.name());
    if constraints.architecture {
        id.push_str("-clean_architecture");
    }
    if let Some(db) = constraints.database.slug() {
        id.push('-');
        id.push_str(db);
    }
    if constraints.orm {
        id.push('-');
        id.push_str(framework.orm().slug());
    }
    id
}

/// Inverse of [`task_id`] for generation-task ids.
pub fn parse_task_id(id: &str) -> Option<(Framework, ConstraintSet)> {
    let (framework, rest) = id.split_once("-openapi")?;
    let framework: Framework = framework.parse().ok()?;
    let mut rest = rest;
    let mut take = |suffix: &str| -> bool {
        if let Some(stripped) = rest.strip_prefix(suffix) {
            rest = stripped;
            true
        } else {
            false
        }
    };
    let architecture = take("-clean_architecture");
    let database = if take("-sqlite") {
        Database::Sqlite
    } else if take("-postgres") {
        Database::Postgres
    } else {
        Database::None
    };
    let orm = take(&format!("-{}", framework.orm().slug()));
    if !rest.is_empty() {
        return None;
    }
    let constraints = ConstraintSet::new(architecture, database, orm).ok()?;
    Some((framework, constraints))
}

/// Default setup commands for generation tasks of a runtime.
pub fn default_setup_commands(runtime: Runtime) -> Vec<String> {
    vec![
        runtime.install_command().to_string(),
        "chmod +x run.sh".to_string(),
    ]
}

/// The modular prompt template. Each field holds one text fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub spec_header: String,
    pub requirements_block: String,
    pub architecture_block: String,
    pub sqlite_block: String,
    pub postgres_block: String,
    pub orm_sentence: String,
    pub mandatory_files_block: String,
    pub server_config_block: String,
    pub evaluation_pipeline_block: String,
}

const FRAGMENTS: [&str; 9] = [
    "spec_header",
    "requirements",
    "architecture",
    "sqlite",
    "postgres",
    "orm_sentence",
    "mandatory_files",
    "server_config",
    "evaluation_pipeline",
];

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::builtin()
    }
}

impl PromptTemplate {
    /// The fragments shipped under `assets/templates/`, embedded at build time.
    pub fn builtin() -> Self {
        PromptTemplate {
            spec_header: include_str!("../assets/templates/spec_header.md").to_string(),
            requirements_block: include_str!("../assets/templates/requirements.md").to_string(),
            architecture_block: include_str!("../assets/templates/architecture.md").to_string(),
            sqlite_block: include_str!("../assets/templates/sqlite.md").to_string(),
            postgres_block: include_str!("../assets/templates/postgres.md").to_string(),
            orm_sentence: include_str!("../assets/templates/orm_sentence.md").to_string(),
            mandatory_files_block: include_str!("../assets/templates/mandatory_files.md")
                .to_string(),
            server_config_block: include_str!("../assets/templates/server_config.md").to_string(),
            evaluation_pipeline_block: include_str!("../assets/templates/evaluation_pipeline.md")
                .to_string(),
        }
    }

    /// Reads `<name>.md` for every fragment from `dir`.
    pub fn load(dir: &Path) -> Result<Self, TaskError> {
        let mut texts = BTreeMap::new();
        for name in FRAGMENTS {
            let path = dir.join(format!("{name}.md"));
            let text = fs::read_to_string(&path).map_err(|source| TaskError::TemplateIo {
                name: name.to_string(),
                source,
            })?;
            texts.insert(name, text);
        }
        let mut take = |name: &str| texts.remove(name).unwrap_or_default();
        Ok(PromptTemplate {
            spec_header: take("spec_header"),
            requirements_block: take("requirements"),
            architecture_block: take("architecture"),
            sqlite_block: take("sqlite"),
            postgres_block: take("postgres"),
            orm_sentence: take("orm_sentence"),
            mandatory_files_block: take("mandatory_files"),
            server_config_block: take("server_config"),
            evaluation_pipeline_block: take("evaluation_pipeline"),
        })
    }

    /// Assembles the prompt: contract text first, then the fragments in
    /// template order. The contract is copied verbatim and never scanned for
    /// placeholders.
    pub fn render(
        &self,
        framework: Framework,
        constraints: &ConstraintSet,
        spec: &str,
    ) -> Result<String, TaskError> {
        constraints.validate()?;
        let runtime = framework.runtime();
        let orm = framework.orm();
        let port = runtime.port().to_string();
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("runtime", runtime.display_name().into());
        vars.insert("framework", framework.name().into());
        vars.insert("port", port);
        vars.insert("orm", orm.display_name().into());
        vars.insert("orm_language", runtime.language().into());
        vars.insert("dependency_file", runtime.dependency_file().into());
        vars.insert("package_manager", runtime.package_manager().into());
        vars.insert("install_command", runtime.install_command().into());
        let orm_sentence = substitute("orm_sentence", self.orm_sentence.trim_end(), &vars)?;
        vars.insert("orm_sentence", orm_sentence);

        let mut flags = BTreeMap::new();
        flags.insert("architecture", constraints.architecture);
        flags.insert("database", constraints.database != Database::None);
        flags.insert("orm", constraints.orm);

        let mut blocks: Vec<String> = Vec::new();
        blocks.push(substitute("spec_header", &self.spec_header, &vars)?);
        let requirements = select_conditional_lines(&self.requirements_block, &flags);
        blocks.push(substitute("requirements", &requirements, &vars)?);
        if constraints.architecture {
            blocks.push(substitute("architecture", &self.architecture_block, &vars)?);
        }
        match constraints.database {
            Database::None => {}
            Database::Sqlite => blocks.push(substitute("sqlite", &self.sqlite_block, &vars)?),
            Database::Postgres => blocks.push(substitute("postgres", &self.postgres_block, &vars)?),
        }
        blocks.push(substitute(
            "mandatory_files",
            &self.mandatory_files_block,
            &vars,
        )?);
        blocks.push(substitute(
            "server_config",
            &self.server_config_block,
            &vars,
        )?);
        blocks.push(substitute(
            "evaluation_pipeline",
            &self.evaluation_pipeline_block,
            &vars,
        )?);

        let mut out = String::with_capacity(spec.len() + 4096);
        out.push_str(spec.trim_end());
        out.push_str("\n\n");
        let body: Vec<&str> = blocks.iter().map(|b| b.trim_end()).collect();
        out.push_str(&body.join("\n\n"));
        out.push('\n');
        Ok(out)
    }
}

static PLACEHOLDER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());
static CONDITIONAL_LINE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\[([a-z_]+)\](.*)$").unwrap());

/// Keeps `[flag]`-prefixed lines only when `flag` is active.
fn select_conditional_lines(block: &str, flags: &BTreeMap<&str, bool>) -> String {
    let mut out = String::new();
    for line in block.lines() {
        match CONDITIONAL_LINE.captures(line) {
            Some(caps) => {
                if flags.get(&caps[1]).copied().unwrap_or(false) {
                    out.push_str(&caps[2]);
                    out.push('\n');
                }
            }
            None => {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

fn substitute(block: &str, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, TaskError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let name = &caps[1];
        let value = vars
            .get(name)
            .ok_or_else(|| TaskError::UnresolvedPlaceholder {
                block: block.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Renders the prompt with the builtin template.
pub fn render_prompt(
    framework: Framework,
    constraints: &ConstraintSet,
    spec: &str,
) -> Result<String, TaskError> {
    PromptTemplate::builtin().render(framework, constraints, spec)
}

/// Builds every constraint variant for each framework, in framework order,
/// then level, then the fixed variant order within a level.
pub fn enumerate_variants(
    frameworks: &[Framework],
    template: &PromptTemplate,
    spec: &str,
) -> Result<Vec<TaskSpec>, TaskError> {
    let mut tasks = Vec::with_capacity(frameworks.len() * ConstraintSet::VARIANTS.len());
    for &framework in frameworks {
        for constraints in ConstraintSet::VARIANTS {
            tasks.push(generation_task(framework, constraints, template, spec)?);
        }
    }
    Ok(tasks)
}

pub fn generation_task(
    framework: Framework,
    constraints: ConstraintSet,
    template: &PromptTemplate,
    spec: &str,
) -> Result<TaskSpec, TaskError> {
    let prompt = template.render(framework, &constraints, spec)?;
    Ok(TaskSpec {
        id: task_id(framework, &constraints),
        kind: TaskKind::Generation,
        framework,
        constraints,
        level: constraints.level(),
        prompt,
        openapi_spec: spec.to_string(),
        setup_commands: default_setup_commands(framework.runtime()),
        ablation_patch: None,
        repo_ref: None,
        feature_metadata: None,
    })
}

/// On-disk task JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskDocument {
    id: String,
    kind: TaskKind,
    framework: Framework,
    runtime: Runtime,
    port: u16,
    constraints: ConstraintSet,
    level: ConstraintLevel,
    prompt: String,
    setup_commands: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ablation_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    repo: Option<RepoRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<FeatureMetadata>,
}

impl TaskSpec {
    pub fn runtime(&self) -> Runtime {
        self.framework.runtime()
    }

    pub fn to_json(&self) -> String {
        let doc = TaskDocument {
            id: self.id.clone(),
            kind: self.kind,
            framework: self.framework,
            runtime: self.framework.runtime(),
            port: self.framework.port(),
            constraints: self.constraints,
            level: self.level,
            prompt: self.prompt.clone(),
            setup_commands: self.setup_commands.clone(),
            ablation_patch: self.ablation_patch.clone(),
            repo: self.repo_ref.clone(),
            metadata: self.feature_metadata.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("task document serializes")
    }

    /// Parses any task document (generation or feature).
    pub fn from_json(text: &str) -> Result<TaskSpec, TaskError> {
        let value: Value = serde_json::from_str(text)?;
        let kind = match value.get("kind") {
            Some(kind) => parse_field::<TaskKind>("kind", kind)?,
            None => return Err(TaskError::MissingField("kind".into())),
        };
        match kind {
            TaskKind::Feature => feature_from_value(&value),
            TaskKind::Generation => {
                for field in ["id", "framework", "constraints", "prompt"] {
                    require(&value, field)?;
                }
                let doc: TaskDocument = serde_json::from_value(value)?;
                doc.constraints.validate()?;
                Ok(TaskSpec {
                    id: doc.id,
                    kind: doc.kind,
                    framework: doc.framework,
                    level: doc.constraints.level(),
                    constraints: doc.constraints,
                    prompt: doc.prompt,
                    openapi_spec: String::new(),
                    setup_commands: doc.setup_commands,
                    ablation_patch: None,
                    repo_ref: None,
                    feature_metadata: None,
                })
            }
        }
    }
}

fn require<'a>(value: &'a Value, field: &str) -> Result<&'a Value, TaskError> {
    match value.get(field) {
        Some(Value::Null) | None => Err(TaskError::MissingField(field.to_string())),
        Some(v) => Ok(v),
    }
}

fn parse_field<T: serde::de::DeserializeOwned>(field: &str, value: &Value) -> Result<T, TaskError> {
    serde_json::from_value(value.clone()).map_err(|e| TaskError::InvalidField {
        field: field.to_string(),
        reason: e.to_string(),
    })
}

fn feature_from_value(value: &Value) -> Result<TaskSpec, TaskError> {
    let id: String = parse_field("id", require(value, "id")?)?;
    let framework: Framework = parse_field("framework", require(value, "framework")?)?;
    let prompt: String = parse_field("prompt", require(value, "prompt")?)?;
    let patch_value = value
        .get("ablation_patch")
        .or_else(|| value.get("patch"))
        .filter(|v| !v.is_null())
        .ok_or_else(|| TaskError::MissingField("ablation_patch".into()))?;
    let ablation_patch: String = parse_field("ablation_patch", patch_value)?;
    let repo_value = require(value, "repo")?;
    let url: String = parse_field(
        "repo.url",
        require(repo_value, "url").map_err(|_| TaskError::MissingField("repo.url".into()))?,
    )?;
    let commit: String = parse_field(
        "repo.commit",
        require(repo_value, "commit").map_err(|_| TaskError::MissingField("repo.commit".into()))?,
    )?;
    let metadata: FeatureMetadata = parse_field("metadata", require(value, "metadata")?)?;
    let setup_commands: Vec<String> = match value.get("setup_commands") {
        Some(v) if !v.is_null() => parse_field("setup_commands", v)?,
        _ => match repo_value.get("setup_commands") {
            Some(v) if !v.is_null() => parse_field("repo.setup_commands", v)?,
            _ => Vec::new(),
        },
    };
    // Constraints of a feature task live in the existing codebase; no
    // verifier applies unless the document says otherwise.
    let constraints: ConstraintSet = match value.get("constraints") {
        Some(v) if !v.is_null() => parse_field("constraints", v)?,
        _ => ConstraintSet::BASELINE,
    };
    constraints.validate()?;
    Ok(TaskSpec {
        id,
        kind: TaskKind::Feature,
        framework,
        level: constraints.level(),
        constraints,
        prompt,
        openapi_spec: String::new(),
        setup_commands,
        ablation_patch: Some(ablation_patch),
        repo_ref: Some(RepoRef { url, commit }),
        feature_metadata: Some(metadata),
    })
}

/// Loads a feature-task document; generation documents are rejected.
pub fn load_feature_task(document: &str) -> Result<TaskSpec, TaskError> {
    let value: Value = serde_json::from_str(document)?;
    let kind = match value.get("kind") {
        Some(kind) => parse_field::<TaskKind>("kind", kind)?,
        None => TaskKind::Feature,
    };
    if kind != TaskKind::Feature {
        return Err(TaskError::KindMismatch {
            expected: TaskKind::Feature,
            found: kind,
        });
    }
    feature_from_value(&value)
}

/// Markdown `## ` headings of a rendered prompt, after the contract text.
pub fn prompt_headings(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter(|l| l.starts_with("## "))
        .map(|l| l.trim().to_string())
        .collect()
}

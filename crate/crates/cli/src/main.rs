use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use structbench_cli::report::{self, judge_failures, taxonomy_table, TableKind};
use structbench_core::diff::{extract_imports, parse_patch};
use structbench_core::task::{
    enumerate_variants, generation_task, parse_task_id, ConstraintLevel, Framework, PromptTemplate,
    TaskSpec, CONDUIT_OPENAPI,
};
use structbench_core::verify::structural_compliance;
use structbench_harness::golden;
use structbench_harness::taxonomy::{read_labels, validate_judge, write_labels, FailureLabel};
use structbench_harness::{
    load_results, run_campaign, CampaignOptions, HarnessConfig, PatchProvider, RunStatus,
};
use structbench_http::server::{serve, Feature, ServerOptions};
use structbench_http::suite::{
    conduit_collection, load_collection, poll_health, HealthPolicy, SuiteRunner, TestCollection,
};

/// Constrained backend-generation benchmark: task composition, structural
/// verification, behavioral testing and reporting.
#[derive(Parser)]
#[command(name = "structbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render generation tasks for every constraint variant.
    Compose(ComposeArgs),
    /// Unified-diff utilities.
    Diff {
        #[command(subcommand)]
        command: DiffCommand,
    },
    /// Check a patch against a task's structural constraints.
    Verify(VerifyArgs),
    /// Run the behavioral suite against a live server.
    RunSuite(RunSuiteArgs),
    /// Serve the in-memory reference implementation.
    ReferenceServer(ReferenceServerArgs),
    /// Build and evaluate every task × trial, writing one record per run.
    Evaluate(EvaluateArgs),
    /// Score a results directory and write the metric tables.
    Metrics(MetricsArgs),
    /// Failure-label utilities.
    Taxonomy {
        #[command(subcommand)]
        command: TaxonomyCommand,
    },
    /// Write the selected tables for a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct ComposeArgs {
    /// Comma-separated frameworks, or `all`.
    #[arg(long, default_value = "all")]
    frameworks: String,
    /// Directory of prompt fragments replacing the built-in template.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// API contract to embed instead of the shipped Conduit spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write `<task-id>.json` files here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DiffCommand {
    /// Summarise the files, added lines and imports in a patch.
    Inspect {
        patch: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a golden solution as a recorded patch directory.
    Golden {
        /// `layered` (compliant with every verifier) or `monolithic`.
        #[arg(long, default_value = "layered")]
        variant: String,
        /// Recorded directory to create; the diff is named after the task.
        #[arg(long)]
        out: PathBuf,
        /// Task id to file the patch under.
        #[arg(long, default_value = golden::GOLDEN_TASK)]
        task: String,
    },
}

#[derive(Args)]
struct TaskSelector {
    /// Generation task id, e.g. `flask-openapi-sqlite`. Repeatable.
    #[arg(long = "task")]
    task_ids: Vec<String>,
    /// Task document (generation or feature). Repeatable.
    #[arg(long = "task-file")]
    task_files: Vec<PathBuf>,
    /// Directory of task documents, as written by `compose --out`.
    #[arg(long)]
    tasks: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    select: TaskSelector,
    #[arg(long)]
    patch: PathBuf,
    /// Harness config supplying layer alias overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunSuiteArgs {
    /// API root, e.g. `http://127.0.0.1:8080/api`.
    #[arg(long)]
    base_url: String,
    /// Collection document; defaults to the shipped Conduit collection.
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Extra suite variable, `NAME=VALUE`. Repeatable.
    #[arg(long = "var")]
    vars: Vec<String>,
    /// Poll the health endpoint before running.
    #[arg(long)]
    wait_healthy: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceServerArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Feature groups to switch off: comments, favorites, profiles.
    #[arg(long, value_delimiter = ',')]
    disable: Vec<String>,
    /// Enables `POST /api/__reset` guarded by this token.
    #[arg(long)]
    reset_token: Option<String>,
    #[arg(long)]
    host: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    select: TaskSelector,
    /// `recorded:<dir>` or `command:<shell command>`.
    #[arg(long)]
    provider: String,
    #[arg(long, default_value_t = 3)]
    trials: u32,
    #[arg(long)]
    workers: Option<usize>,
    /// Port range, `LOW-HIGH`.
    #[arg(long)]
    ports: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    collection: Option<PathBuf>,
    /// Replace every task's setup commands. Repeatable.
    #[arg(long = "setup")]
    setup: Vec<String>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Output directory for the tables.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Subcommand)]
enum TaxonomyCommand {
    /// Coarse and logic-error distributions of a label file.
    Aggregate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between judge and human labels.
    Validate {
        #[arg(long)]
        judge: PathBuf,
        #[arg(long)]
        human: PathBuf,
    },
    /// Label every failed run of a campaign with the rule-based judge.
    Judge {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated table names; all tables by default.
    #[arg(long, value_delimiter = ',')]
    tables: Vec<String>,
    /// Failure labels for the taxonomy table; the rule judge labels failed
    /// runs otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 1;
const SETUP: u8 = 2;
const INTERNAL: u8 = 3;

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: INTERNAL,
            error,
        }
    }
}

trait ExitKind<T> {
    fn usage(self) -> Result<T, Failure>;
    fn setup(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitKind<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: USAGE,
            error: e.into(),
        })
    }

    fn setup(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: SETUP,
            error: e.into(),
        })
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Compose(a) => compose(a),
        Command::Diff {
            command: DiffCommand::Inspect { patch, json },
        } => diff_inspect(&patch, json),
        Command::Diff {
            command: DiffCommand::Golden { variant, out, task },
        } => export_golden(&variant, &out, &task),
        Command::Verify(a) => verify(a),
        Command::RunSuite(a) => run_suite(a),
        Command::ReferenceServer(a) => reference_server(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Metrics(a) => metrics(a),
        Command::Taxonomy { command } => taxonomy(command),
        Command::Report(a) => report_cmd(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_frameworks(text: &str) -> Result<Vec<Framework>> {
    if text.trim() == "all" {
        return Ok(Framework::ALL.to_vec());
    }
    text.split(',')
        .map(|s| s.trim().parse::<Framework>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn compose(a: ComposeArgs) -> Outcome {
    let start = Instant::now();
    let frameworks = parse_frameworks(&a.frameworks).usage()?;
    let template = match &a.templates {
        Some(dir) => PromptTemplate::load(dir).setup()?,
        None => PromptTemplate::builtin(),
    };
    let spec = match &a.spec {
        Some(p) => read(p).setup()?,
        None => CONDUIT_OPENAPI.to_string(),
    };
    let tasks = enumerate_variants(&frameworks, &template, &spec).setup()?;
    if let Some(out) = &a.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        for t in &tasks {
            let path = out.join(format!("{}.json", t.id));
            fs::write(&path, t.to_json() + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let mut per_level: BTreeMap<ConstraintLevel, usize> = BTreeMap::new();
    for t in &tasks {
        println!("{}\t{}", t.level, t.id);
        *per_level.entry(t.level).or_default() += 1;
    }
    let counts: Vec<String> = ConstraintLevel::ALL
        .iter()
        .map(|l| format!("{l} {}", per_level.get(l).copied().unwrap_or(0)))
        .collect();
    eprintln!(
        "{} tasks ({}) in {:.3}s",
        tasks.len(),
        counts.join(", "),
        start.elapsed().as_secs_f64()
    );
    Ok(0)
}

fn diff_inspect(path: &Path, json: bool) -> Outcome {
    let text = read(path).usage()?;
    let diff = parse_patch(&text).setup()?;
    let imports = extract_imports(&diff);
    if json {
        let files: Vec<_> = diff
            .files
            .iter()
            .map(|f| {
                serde_json::json!({
                    "path": f.path,
                    "language": format!("{:?}", f.language).to_lowercase(),
                    "added_lines": f.added_lines.len(),
                    "imports": imports.iter().filter(|i| i.path == f.path).map(|i| &i.target).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = serde_json::json!({ "files": files, "total_added": diff.total_added() });
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?
        );
        return Ok(0);
    }
    for f in &diff.files {
        let n = imports.iter().filter(|i| i.path == f.path).count();
        println!(
            "{:<60} {:>10?} +{:<5} imports {}",
            f.path,
            f.language,
            f.added_lines.len(),
            n
        );
    }
    println!(
        "{} files, {} added lines",
        diff.files.len(),
        diff.total_added()
    );
    Ok(0)
}

fn export_golden(variant: &str, out: &Path, task: &str) -> Outcome {
    let diff = match variant {
        "layered" => golden::layered_diff(),
        "monolithic" => golden::monolithic_diff(),
        other => return Err(anyhow!("unknown golden variant `{other}`")).usage(),
    };
    golden::write_recorded(out, task, &diff).map_err(anyhow::Error::from)?;
    eprintln!("wrote {}/{task}.diff", out.display());
    Ok(0)
}

fn load_task_file(path: &Path) -> Result<TaskSpec> {
    TaskSpec::from_json(&read(path)?).with_context(|| format!("task document {}", path.display()))
}

fn select_tasks(s: &TaskSelector) -> Result<Vec<TaskSpec>, Failure> {
    let template = PromptTemplate::builtin();
    let mut tasks = Vec::new();
    for id in &s.task_ids {
        let (framework, constraints) = parse_task_id(id)
            .ok_or_else(|| anyhow!("unknown task id `{id}`"))
            .usage()?;
        tasks.push(generation_task(framework, constraints, &template, CONDUIT_OPENAPI).setup()?);
    }
    for path in &s.task_files {
        tasks.push(load_task_file(path).setup()?);
    }
    if let Some(dir) = &s.tasks {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))
            .setup()?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            tasks.push(load_task_file(&p).setup()?);
        }
    }
    if tasks.is_empty() {
        return Err(anyhow!(
            "no tasks selected (use --task, --task-file or --tasks)"
        ))
        .usage();
    }
    Ok(tasks)
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig, Failure> {
    match path {
        Some(p) => HarnessConfig::load(p).usage(),
        None => Ok(HarnessConfig::default()),
    }
}

fn verify(a: VerifyArgs) -> Outcome {
    let tasks = select_tasks(&a.select)?;
    let [task] = tasks.as_slice() else {
        return Err(anyhow!("verify takes exactly one task")).usage();
    };
    let mut options = CampaignOptions::default();
    load_config(a.config.as_deref())?
        .apply(&mut options)
        .usage()?;
    let diff = parse_patch(&read(&a.patch).usage()?).setup()?;
    let report = structural_compliance(task, &diff, &options.eval.aliases);
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?
        );
    } else {
        for r in &report.reports {
            println!(
                "{}: {}",
                r.axis,
                if r.compliant { "compliant" } else { "violated" }
            );
            for e in &r.evidence {
                println!(
                    "  + {}",
                    serde_json::to_string(e).map_err(anyhow::Error::from)?
                );
            }
            for v in &r.violations {
                println!("  - {}", v.description);
            }
        }
        if report.reports.is_empty() {
            println!("no structural constraints apply to {}", task.id);
        }
        println!(
            "overall: {}",
            if report.compliant {
                "compliant"
            } else {
                "non-compliant"
            }
        );
    }
    Ok(0)
}

fn parse_vars(vars: &[String]) -> Result<BTreeMap<String, String>> {
    vars.iter()
        .map(|v| {
            v.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| anyhow!("expected NAME=VALUE, got `{v}`"))
        })
        .collect()
}

fn load_suite(path: Option<&Path>) -> Result<TestCollection, Failure> {
    match path {
        Some(p) => load_collection(&read(p).usage()?).setup(),
        None => Ok(conduit_collection()),
    }
}

fn run_suite(a: RunSuiteArgs) -> Outcome {
    let collection = load_suite(a.collection.as_deref())?;
    let vars = parse_vars(&a.vars).usage()?;
    let base = a.base_url.trim_end_matches('/');
    if a.wait_healthy {
        let health = poll_health(base, &HealthPolicy::default());
        if !health.healthy {
            return Err(anyhow!(
                "{base} never became healthy ({} attempts)",
                health.attempts
            ))
            .setup();
        }
    }
    let result = SuiteRunner::default().run(&collection, base, &vars);
    for f in result.folder_summary() {
        println!("{:<40} {:>4}/{:<4}", f.folder, f.passed, f.total);
    }
    println!(
        "{} requests, {}/{} assertions passed",
        result.requests_executed, result.assertions_passed, result.assertions_total
    );
    for fail in result.failures().take(20) {
        println!(
            "  FAIL {} / {} #{}: {}",
            fail.folder, fail.request, fail.index, fail.detail
        );
    }
    if let Some(p) = &a.csv {
        fs::write(p, result.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.json {
        let text = serde_json::to_string_pretty(&result).map_err(anyhow::Error::from)?;
        fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(0)
}

fn reference_server(a: ReferenceServerArgs) -> Outcome {
    let disabled = a
        .disable
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<Feature>())
        .collect::<Result<_, _>>()
        .usage()?;
    let handle = serve(
        a.port,
        ServerOptions {
            disabled,
            reset_token: a.reset_token,
            host: a.host,
        },
    )
    .setup()?;
    eprintln!("listening on {}", handle.api_url());
    handle.wait();
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let tasks = select_tasks(&a.select)?;
    let provider: PatchProvider = a.provider.parse().usage()?;
    let collection = load_suite(a.collection.as_deref())?;
    let mut options = CampaignOptions {
        trials: a.trials,
        out_dir: Some(a.out.clone()),
        ..CampaignOptions::default()
    };
    load_config(a.config.as_deref())?
        .apply(&mut options)
        .usage()?;
    if let Some(w) = a.workers {
        options.workers = w.max(1);
    }
    if let Some(range) = &a.ports {
        options.ports = structbench_harness::config::parse_port_range(range).usage()?;
    }
    if !a.setup.is_empty() {
        options.eval.setup_override = Some(a.setup.clone());
    }
    if let Some(agent) = a.agent {
        options.eval.agent = agent;
    }
    if let Some(model) = a.model {
        options.eval.model = model;
    }
    let records = run_campaign(&tasks, &provider, &collection, &options).usage()?;
    let mut code = 0;
    for r in &records {
        println!(
            "{:<60} {:<18} {:>3}/{:<3} health={} compliant={} full_pass={}",
            r.run_id,
            format!("{:?}", r.status),
            r.suite.assertions_passed,
            r.suite.assertions_total,
            r.health_ok,
            r.structurally_compliant,
            r.full_pass()
        );
        match r.status {
            RunStatus::TaskSetupError => code = SETUP,
            RunStatus::InternalError if code == 0 => code = INTERNAL,
            _ => {}
        }
    }
    eprintln!("{} runs written to {}", records.len(), a.out.display());
    Ok(code)
}

fn metrics(a: MetricsArgs) -> Outcome {
    let bundle = report::report(&a.runs, None, &TableKind::METRICS).setup()?;
    bundle.write(&a.report).map_err(anyhow::Error::from)?;
    print!("{}", bundle.to_text());
    Ok(0)
}

fn read_label_file(path: &Path) -> Result<Vec<FailureLabel>, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .usage()?;
    read_labels(BufReader::new(file))
        .with_context(|| format!("labels in {}", path.display()))
        .setup()
}

fn taxonomy(command: TaxonomyCommand) -> Outcome {
    match command {
        TaxonomyCommand::Aggregate { labels, out } => {
            let labels = read_label_file(&labels)?;
            let bundle = report::ReportBundle {
                tables: vec![taxonomy_table(&labels, "the supplied label file")],
            };
            if let Some(dir) = out {
                bundle.write(&dir).map_err(anyhow::Error::from)?;
            }
            print!("{}", bundle.to_text());
        }
        TaxonomyCommand::Validate { judge, human } => {
            let judge = read_label_file(&judge)?;
            let human = read_label_file(&human)?;
            let v = validate_judge(&judge, &human).setup()?;
            println!("n = {}", v.n);
            println!("accuracy = {}%", report::pct1(v.accuracy));
            println!("kappa = {:.3}", v.kappa);
            println!(
                "{:<28} {:>9} {:>6} {:>6} {:>7}",
                "class", "precision", "recall", "f1", "support"
            );
            for c in &v.report.classes {
                println!(
                    "{:<28} {:>9} {:>6} {:>6} {:>7}",
                    c.class,
                    report::pct1(c.precision),
                    report::pct1(c.recall),
                    report::pct1(c.f1),
                    c.support
                );
            }
            println!(
                "{:<28} {:>9} {:>6} {:>6}",
                "macro",
                report::pct1(v.report.macro_precision),
                report::pct1(v.report.macro_recall),
                report::pct1(v.report.macro_f1)
            );
        }
        TaxonomyCommand::Judge { runs, out } => {
            let (_, records) = load_results(&runs).setup()?;
            let labels = judge_failures(&records);
            let file =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_labels(file, &labels).map_err(anyhow::Error::from)?;
            eprintln!("{} failed runs labelled", labels.len());
        }
    }
    Ok(0)
}

fn report_cmd(a: ReportArgs) -> Outcome {
    let selection: Vec<TableKind> = if a.tables.is_empty() {
        TableKind::ALL.to_vec()
    } else {
        a.tables
            .iter()
            .map(|t| t.parse::<TableKind>())
            .collect::<Result<_, _>>()
            .usage()?
    };
    let labels = match &a.labels {
        Some(p) => Some(read_label_file(p)?),
        None => None,
    };
    if !a.runs.is_dir() {
        return Err(anyhow!("{} is not a directory", a.runs.display())).setup();
    }
    let bundle = report::report(&a.runs, labels.as_deref(), &selection).setup()?;
    bundle.write(&a.out).map_err(anyhow::Error::from)?;
    print!("{}", bundle.to_text());
    Ok(0)
}

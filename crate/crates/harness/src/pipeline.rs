//! The two-phase pipeline: build (obtain a patch) and evaluate (apply it to a
//! pristine workspace, run the server, test it, verify it).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use structbench_core::diff::{parse_patch, ParsedDiff};
use structbench_core::task::{Database, TaskKind, TaskSpec};
use structbench_core::verify::{structural_compliance, LayerAliases};
use structbench_http::suite::{poll_until, HealthPolicy, SuiteResult, SuiteRunner, TestCollection};

use crate::process::{run_step, GroupChild};
use crate::provider::{read_usage, resolve_recorded, run_command, usage_sidecar, PatchProvider};
use crate::record::{run_id, PatchDocument, RunRecord, RunStatus, TokenUsage};
use crate::workspace::Workspace;
use crate::HarnessError;

pub const RUN_SCRIPT: &str = "run.sh";

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub health: HealthPolicy,
    pub request_timeout: Duration,
    /// Replaces every task's setup commands when set.
    pub setup_override: Option<Vec<String>>,
    pub setup_timeout: Duration,
    pub provider_timeout: Duration,
    pub shutdown_grace: Duration,
    /// PostgreSQL connection string handed to runs that need one.
    pub pg_url: Option<String>,
    pub aliases: LayerAliases,
    /// How the server is launched from the workspace root.
    pub run_command: String,
    /// Extra suite variables overriding the collection defaults.
    pub globals: BTreeMap<String, String>,
    pub agent: String,
    pub model: String,
    /// Bytes of server log kept in the record.
    pub log_tail_bytes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            health: HealthPolicy::default(),
            request_timeout: Duration::from_secs(10),
            setup_override: None,
            setup_timeout: Duration::from_secs(600),
            provider_timeout: Duration::from_secs(3600),
            shutdown_grace: Duration::from_secs(5),
            pg_url: None,
            aliases: LayerAliases::default(),
            run_command: format!("sh {RUN_SCRIPT}"),
            globals: BTreeMap::new(),
            agent: "recorded".into(),
            model: "none".into(),
            log_tail_bytes: 8 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOutput {
    pub diff: String,
    pub logs: String,
    pub token_usage: Option<TokenUsage>,
}

fn prepare_workspace(task: &TaskSpec, port: u16) -> Result<Workspace, HarnessError> {
    match task.kind {
        TaskKind::Generation => Workspace::empty(port),
        TaskKind::Feature => {
            let setup = |reason: &str| HarnessError::TaskSetup {
                task: task.id.clone(),
                reason: reason.to_string(),
            };
            let repo = task
                .repo_ref
                .as_ref()
                .ok_or_else(|| setup("feature task has no repo"))?;
            let ablation = task
                .ablation_patch
                .as_deref()
                .ok_or_else(|| setup("feature task has no ablation patch"))?;
            Workspace::feature(&task.id, port, repo, ablation)
        }
    }
}

/// Obtains the patch for one `(task, trial)`.
pub fn build_phase(
    task: &TaskSpec,
    provider: &PatchProvider,
    trial: u32,
    opts: &EvalOptions,
) -> Result<BuildOutput, HarnessError> {
    match provider {
        PatchProvider::RecordedDirectory(dir) => {
            let path = resolve_recorded(dir, &task.id, trial)?;
            let diff = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            Ok(BuildOutput {
                diff,
                logs: format!("[build] recorded patch {}\n", path.display()),
                token_usage: read_usage(&usage_sidecar(&path)),
            })
        }
        PatchProvider::ExternalCommand(command) => {
            let ws = prepare_workspace(task, 0)?;
            let run = run_command(
                &ws,
                command,
                &task.id,
                trial,
                &task.prompt,
                opts.provider_timeout,
            )?;
            let mut logs = String::new();
            match (run.timed_out, run.exit_code) {
                (true, _) => logs.push_str("[build] provider timed out\n"),
                (false, Some(0)) => logs.push_str("[build] provider exited 0\n"),
                (false, Some(c)) => {
                    let _ = writeln!(logs, "[build] provider exited {c}");
                }
                (false, None) => logs.push_str("[build] provider killed by signal\n"),
            }
            logs.push_str(&tail(&run.log, opts.log_tail_bytes));
            let diff = ws.diff_against_baseline()?;
            Ok(BuildOutput {
                diff,
                logs,
                token_usage: run.token_usage,
            })
        }
    }
}

/// Last `max` bytes of `text`, cut at a line boundary when possible.
pub fn tail(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    let cut = &text[start..];
    match cut.find('\n') {
        Some(i) if i + 1 < cut.len() => cut[i + 1..].to_string(),
        _ => cut.to_string(),
    }
}

fn base_record(task: &TaskSpec, trial: u32, opts: &EvalOptions) -> RunRecord {
    RunRecord {
        run_id: run_id(&task.id, trial),
        task_id: task.id.clone(),
        trial,
        agent: opts.agent.clone(),
        model: opts.model.clone(),
        framework: task.framework,
        constraints: task.constraints,
        level: task.level,
        status: RunStatus::Completed,
        patch: PatchDocument::default(),
        patch_applied: false,
        server_started: false,
        health_ok: false,
        suite: SuiteResult {
            requests_executed: 0,
            assertions_total: 0,
            assertions_passed: 0,
            per_assertion: Vec::new(),
        },
        verifier_reports: Vec::new(),
        structurally_compliant: false,
        logs: String::new(),
        token_usage: None,
        wall_time: 0.0,
    }
}

/// A record for a run that could not be carried out at all.
pub fn failed_record(
    task: &TaskSpec,
    trial: u32,
    collection: &TestCollection,
    opts: &EvalOptions,
    status: RunStatus,
    reason: &str,
) -> RunRecord {
    let mut record = base_record(task, trial, opts);
    record.status = status;
    record.suite = SuiteResult::all_failed(collection, &format!("not executed: {reason}"));
    record.logs = format!("[harness] {reason}\n");
    record
}

/// Evaluates `diff` for `task` on `port`. Only task-setup problems are
/// returned as errors; everything else is recorded in the run.
pub fn evaluate_phase(
    task: &TaskSpec,
    diff: &str,
    collection: &TestCollection,
    port: u16,
    trial: u32,
    opts: &EvalOptions,
) -> Result<RunRecord, HarnessError> {
    let start = Instant::now();
    let mut record = base_record(task, trial, opts);
    let mut logs = String::new();

    let parsed = match parse_patch(diff) {
        Ok(p) => Some(p),
        Err(e) => {
            let _ = writeln!(logs, "[patch] cannot parse: {e}");
            None
        }
    };
    // Verifiers need no runtime, so they run whatever happens below.
    let compliance = structural_compliance(
        task,
        parsed.as_ref().unwrap_or(&ParsedDiff::default()),
        &opts.aliases,
    );
    record.verifier_reports = compliance.reports;
    record.structurally_compliant = compliance.compliant;

    let ws = prepare_workspace(task, port)?;
    record.patch = PatchDocument::new(
        parsed.clone().unwrap_or_default(),
        Some(ws.baseline_ref.clone()),
    );

    let needs_pg = task.constraints.database == Database::Postgres;
    let outcome = if parsed.is_none() {
        record.status = RunStatus::PatchNotApplied;
        Err("patch did not apply".to_string())
    } else if let Err(e) = ws.apply(diff) {
        let _ = writeln!(logs, "[patch] {e}");
        record.status = RunStatus::PatchNotApplied;
        Err("patch did not apply".to_string())
    } else if needs_pg && opts.pg_url.is_none() {
        record.patch_applied = true;
        record.status = RunStatus::EnvironmentSkipped;
        logs.push_str("[env] PostgreSQL target not configured; run skipped\n");
        Err("environment skipped (no PostgreSQL target)".to_string())
    } else {
        record.patch_applied = true;
        logs.push_str("[patch] applied\n");
        run_server_and_suite(task, collection, &ws, opts, &mut record, &mut logs)
    };
    record.suite = match outcome {
        Ok(suite) => suite,
        Err(reason) => SuiteResult::all_failed(collection, &format!("not executed: {reason}")),
    };
    record.logs = logs;
    record.wall_time = start.elapsed().as_secs_f64();
    Ok(record)
}

fn run_env(ws: &Workspace, opts: &EvalOptions) -> Vec<(String, String)> {
    let mut env = vec![("PORT".to_string(), ws.port.to_string())];
    if let Some(url) = &opts.pg_url {
        env.push(("PG_URL".to_string(), url.clone()));
        env.push(("DATABASE_URL".to_string(), url.clone()));
    }
    env
}

fn run_server_and_suite(
    task: &TaskSpec,
    collection: &TestCollection,
    ws: &Workspace,
    opts: &EvalOptions,
    record: &mut RunRecord,
    logs: &mut String,
) -> Result<SuiteResult, String> {
    let env = run_env(ws, opts);
    let commands = opts
        .setup_override
        .clone()
        .unwrap_or_else(|| task.setup_commands.clone());
    for command in &commands {
        match run_step(command, &ws.root, &env, &ws.setup_log, opts.setup_timeout) {
            Ok(step) if step.timed_out => {
                let _ = writeln!(logs, "[setup] `{command}` timed out");
            }
            Ok(step) => {
                let code = step
                    .exit_code
                    .map_or("signal".to_string(), |c| c.to_string());
                let _ = writeln!(logs, "[setup] `{command}` exit {code}");
            }
            Err(e) => {
                let _ = writeln!(logs, "[setup] `{command}` could not start: {e}");
            }
        }
    }
    let setup_output = std::fs::read_to_string(&ws.setup_log).unwrap_or_default();
    if !setup_output.is_empty() {
        logs.push_str("[setup output]\n");
        logs.push_str(&tail(&setup_output, opts.log_tail_bytes));
        if !logs.ends_with('\n') {
            logs.push('\n');
        }
    }

    if !ws.root.join(RUN_SCRIPT).is_file() {
        let _ = writeln!(logs, "[server] no {RUN_SCRIPT} in the patch");
        return Err(format!("no {RUN_SCRIPT}"));
    }
    let mut server =
        match GroupChild::spawn_shell(&opts.run_command, &ws.root, &env, &ws.server_log) {
            Ok(child) => child,
            Err(e) => {
                let _ = writeln!(logs, "[server] cannot start: {e}");
                return Err("server did not start".to_string());
            }
        };
    record.server_started = true;

    let api_base = format!("http://127.0.0.1:{}/api", ws.port);
    let health = poll_until(&api_base, &opts.health, || server.has_exited());
    record.health_ok = health.healthy;
    let _ = writeln!(
        logs,
        "[health] {} after {} attempt(s)",
        if health.healthy {
            "healthy"
        } else {
            "unhealthy"
        },
        health.attempts
    );
    let result = if health.healthy {
        Ok(SuiteRunner::new(opts.request_timeout).run(collection, &api_base, &opts.globals))
    } else {
        Err("health check failed".to_string())
    };
    server.terminate(opts.shutdown_grace);

    let server_log = std::fs::read_to_string(&ws.server_log).unwrap_or_default();
    logs.push_str("[server log]\n");
    logs.push_str(&tail(&server_log, opts.log_tail_bytes));
    result
}

/// Build then evaluate, turning every failure into a record.
pub fn run_once(
    task: &TaskSpec,
    provider: &PatchProvider,
    trial: u32,
    collection: &TestCollection,
    port: u16,
    opts: &EvalOptions,
) -> RunRecord {
    let start = Instant::now();
    let build = match build_phase(task, provider, trial, opts) {
        Ok(b) => b,
        Err(e) => {
            let status = match e {
                HarnessError::TaskSetup { .. } => RunStatus::TaskSetupError,
                _ => RunStatus::InternalError,
            };
            let mut r = failed_record(task, trial, collection, opts, status, &e.to_string());
            r.wall_time = start.elapsed().as_secs_f64();
            return r;
        }
    };
    let mut record = match evaluate_phase(task, &build.diff, collection, port, trial, opts) {
        Ok(r) => r,
        Err(e) => {
            let status = match e {
                HarnessError::TaskSetup { .. } => RunStatus::TaskSetupError,
                _ => RunStatus::InternalError,
            };
            failed_record(task, trial, collection, opts, status, &e.to_string())
        }
    };
    record.logs = format!("{}{}", build.logs, record.logs);
    record.token_usage = build.token_usage;
    record.wall_time = start.elapsed().as_secs_f64();
    record
}

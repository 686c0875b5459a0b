//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde::Deserialize;
use structbench_cli::report::{build_report, TableKind};
use structbench_core::diff::parse_patch;
use structbench_core::metrics::{
    assert_pct, cohen_kappa, correlations, marginal_effect, pass_at_k, ConstraintAxis, RunScore,
};
use structbench_core::task::{
    enumerate_variants, generation_task, parse_task_id, render_prompt, ConstraintLevel,
    ConstraintSet, Database, Framework, PromptTemplate, TaskSpec, CONDUIT_OPENAPI,
};
use structbench_core::verify::{check_constraints, Axis, LayerAliases};
use structbench_harness::campaign::{save_results, CampaignIndex, IndexEntry};
use structbench_harness::golden::{self, GOLDEN_TASK};
use structbench_harness::pipeline::failed_record;
use structbench_harness::taxonomy::{
    aggregate_taxonomy, write_labels, CoarseCategory, FailureLabel, LabelSource, LogicSubcategory,
};
use structbench_harness::{
    load_results, run_campaign, CampaignOptions, EvalOptions, PatchProvider, RunRecord, RunStatus,
};
use structbench_http::server::{serve, Feature, ServerOptions};
use structbench_http::suite::{conduit_collection, SuiteRunner};

type Check = Result<(), String>;

/// `(id, description, check)`
type Criterion = (&'static str, &'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_structbench"))
}

fn run_bin(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "structbench {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn core_tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests")
}

fn ac01_task_matrix() -> Check {
    let start = Instant::now();
    let tasks = enumerate_variants(&Framework::ALL, &PromptTemplate::builtin(), CONDUIT_OPENAPI)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(tasks.len() == 80, "{} tasks", tasks.len());
    let mut per_level: BTreeMap<ConstraintLevel, usize> = BTreeMap::new();
    for t in &tasks {
        *per_level.entry(t.level).or_default() += 1;
    }
    let counts: Vec<usize> = ConstraintLevel::ALL.iter().map(|l| per_level[l]).collect();
    ensure!(counts == [8, 24, 32, 16], "level counts {counts:?}");
    let ids: BTreeSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    ensure!(ids.len() == 80, "duplicate ids");
    let again = enumerate_variants(&Framework::ALL, &PromptTemplate::builtin(), CONDUIT_OPENAPI)
        .map_err(|e| e.to_string())?;
    ensure!(
        tasks.iter().map(|t| &t.id).eq(again.iter().map(|t| &t.id)),
        "ids differ between runs"
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");

    let start = Instant::now();
    let listing = run_bin(&["compose"])?;
    let cli_elapsed = start.elapsed();
    let cli_ids: Vec<&str> = listing
        .lines()
        .filter_map(|l| l.split('\t').nth(1))
        .collect();
    ensure!(
        cli_ids == tasks.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
        "compose output differs from the library"
    );
    ensure!(
        cli_elapsed < Duration::from_secs(1),
        "compose took {cli_elapsed:?}"
    );
    Ok(())
}

fn blocks(prompt: &str) -> BTreeSet<&'static str> {
    let mut out = BTreeSet::new();
    for (marker, name) in [
        ("## Architecture", "architecture"),
        ("Use **SQLite**", "sqlite"),
        ("Use **PostgreSQL**", "postgres"),
        ("ORM for handling the database", "orm"),
    ] {
        if prompt.contains(marker) {
            out.insert(name);
        }
    }
    out
}

fn implied_blocks(c: &ConstraintSet) -> BTreeSet<&'static str> {
    let mut out = BTreeSet::new();
    if c.architecture {
        out.insert("architecture");
    }
    match c.database {
        Database::Sqlite => {
            out.insert("sqlite");
        }
        Database::Postgres => {
            out.insert("postgres");
        }
        Database::None => {}
    }
    if c.orm {
        out.insert("orm");
    }
    out
}

fn ac02_prompt_rendering() -> Check {
    let tasks = enumerate_variants(&Framework::ALL, &PromptTemplate::builtin(), CONDUIT_OPENAPI)
        .map_err(|e| e.to_string())?;
    for t in &tasks {
        ensure!(
            blocks(&t.prompt) == implied_blocks(&t.constraints),
            "{}: blocks {:?}",
            t.id,
            blocks(&t.prompt)
        );
    }
    for a in &tasks {
        for b in tasks.iter().filter(|b| b.framework == a.framework) {
            let ia = implied_blocks(&a.constraints);
            if ia.is_subset(&implied_blocks(&b.constraints)) {
                ensure!(
                    blocks(&a.prompt).is_subset(&blocks(&b.prompt)),
                    "{} not contained in {}",
                    a.id,
                    b.id
                );
            }
        }
    }
    // Golden prompts, rendered against a stub contract, one L0 and one L3
    // per runtime.
    let stub = "openapi: 3.0.1\ninfo:\n  title: Stub\npaths:\n  /articles/{slug}: {}\n";
    let l3 = ConstraintSet::new(true, Database::Postgres, true).map_err(|e| e.to_string())?;
    for (fw, tag) in [(Framework::Flask, "flask"), (Framework::Express, "express")] {
        for (c, level) in [(ConstraintSet::BASELINE, "l0"), (l3, "l3")] {
            let path = core_tests_dir().join(format!("golden/{tag}-{level}.txt"));
            let want =
                std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let got = render_prompt(fw, &c, stub).map_err(|e| e.to_string())?;
            ensure!(got == want, "{tag}-{level} prompt differs from golden file");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct FixtureCase {
    fixture: String,
    framework: Framework,
    constraints: ConstraintSet,
    expected: BTreeMap<Axis, bool>,
}

fn ac03_verifier_fixtures() -> Check {
    let dir = core_tests_dir().join("fixtures/verifiers");
    let manifest = std::fs::read_to_string(dir.join("expected.json")).map_err(|e| e.to_string())?;
    let cases: Vec<FixtureCase> = serde_json::from_str(&manifest).map_err(|e| e.to_string())?;
    let distinct: BTreeSet<&str> = cases.iter().map(|c| c.fixture.as_str()).collect();
    ensure!(distinct.len() >= 15, "only {} fixtures", distinct.len());
    let aliases = LayerAliases::default();
    let mut verdicts = 0;
    for case in &cases {
        let text = std::fs::read_to_string(dir.join(&case.fixture)).map_err(|e| e.to_string())?;
        let diff = parse_patch(&text).map_err(|e| format!("{}: {e}", case.fixture))?;
        let report = check_constraints(case.framework, &case.constraints, &diff, &aliases);
        ensure!(
            report.reports.len() == case.expected.len(),
            "{}: {} verifiers ran",
            case.fixture,
            report.reports.len()
        );
        for (axis, want) in &case.expected {
            let got = report.report(*axis).map(|r| r.compliant);
            ensure!(
                got == Some(*want),
                "{} [{axis}]: got {got:?}, want {want}",
                case.fixture
            );
            verdicts += 1;
        }
    }
    ensure!(verdicts >= 15, "only {verdicts} verdicts");
    Ok(())
}

fn ac04_collection_counts() -> Check {
    let c = conduit_collection();
    ensure!(c.total_requests() == 32, "{} requests", c.total_requests());
    ensure!(
        c.total_assertions() == 291,
        "{} assertions",
        c.total_assertions()
    );
    let got: Vec<(usize, usize)> = c
        .folder_counts()
        .into_iter()
        .map(|f| (f.requests, f.assertions))
        .collect();
    ensure!(
        got == [(5, 30), (4, 20), (18, 212), (4, 26), (1, 3)],
        "folder counts {got:?}"
    );
    Ok(())
}

fn write_fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("harness.toml");
    std::fs::write(
        &path,
        "setup_override = [\"chmod +x run.sh\"]\nshutdown_grace_s = 2\n\n[health]\ninterval_ms = 200\nmax_attempts = 150\ntotal_timeout_s = 30\n",
    )
    .unwrap();
    path
}

fn ac05_end_to_end_golden() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_fast_config(tmp.path());
    let port_range = {
        let p = free_port();
        format!("{p}-{p}")
    };
    let mut results = Vec::new();
    for variant in ["layered", "monolithic"] {
        let patches = tmp.path().join(format!("patches-{variant}"));
        let out = tmp.path().join(format!("results-{variant}"));
        run_bin(&[
            "diff",
            "golden",
            "--variant",
            variant,
            "--out",
            patches.to_str().unwrap(),
        ])?;
        let start = Instant::now();
        run_bin(&[
            "evaluate",
            "--task",
            GOLDEN_TASK,
            "--provider",
            &format!("recorded:{}", patches.display()),
            "--trials",
            "1",
            "--config",
            config.to_str().unwrap(),
            "--ports",
            &port_range,
            "--out",
            out.to_str().unwrap(),
        ])?;
        let elapsed = start.elapsed();
        ensure!(
            elapsed < Duration::from_secs(120),
            "{variant} took {elapsed:?}"
        );
        let (_, records) = load_results(&out).map_err(|e| e.to_string())?;
        ensure!(records.len() == 1, "{} records", records.len());
        results.push(records.into_iter().next().unwrap());
    }
    let (layered, mono) = (&results[0], &results[1]);
    ensure!(layered.health_ok, "golden unhealthy: {}", layered.logs);
    ensure!(
        (
            layered.suite.assertions_passed,
            layered.suite.assertions_total
        ) == (291, 291),
        "golden {}/{}",
        layered.suite.assertions_passed,
        layered.suite.assertions_total
    );
    ensure!(
        layered.verifier_reports.len() == 3,
        "{} verifiers",
        layered.verifier_reports.len()
    );
    ensure!(
        layered.verifier_reports.iter().all(|r| r.compliant),
        "golden verifier failure: {:?}",
        layered
            .verifier_reports
            .iter()
            .filter(|r| !r.compliant)
            .collect::<Vec<_>>()
    );
    ensure!(layered.full_pass(), "golden is not a full pass");

    ensure!(
        mono.suite.assertions_passed == 291,
        "monolithic {}/291",
        mono.suite.assertions_passed
    );
    let arch = mono
        .verifier_reports
        .iter()
        .find(|r| r.axis == Axis::Architecture);
    ensure!(
        arch.is_some_and(|r| !r.compliant),
        "architecture verifier accepted the monolith"
    );
    let enforced = assert_pct(&[mono.score()], true).map_err(|e| e.to_string())?;
    let raw = assert_pct(&[mono.score()], false).map_err(|e| e.to_string())?;
    ensure!(
        enforced == 0.0 && raw == 100.0,
        "monolithic enforced {enforced}, raw {raw}"
    );
    Ok(())
}

fn ac06_comments_disabled() -> Check {
    // Hand count: with comments switched off, exactly the four comment
    // requests fail, every one of their assertions (12 + 11 + 9 + 1 = 33).
    let expected: BTreeMap<&str, usize> = [
        ("Create Comment for Article", 12),
        ("All Comments for Article", 11),
        ("All Comments for Article without login", 9),
        ("Delete Comment for Article", 1),
    ]
    .into_iter()
    .collect();
    let server = serve(
        0,
        ServerOptions {
            disabled: [Feature::Comments].into_iter().collect(),
            ..ServerOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let result =
        SuiteRunner::default().run(&conduit_collection(), &server.api_url(), &BTreeMap::new());
    server.shutdown();
    let mut failed: BTreeMap<&str, usize> = BTreeMap::new();
    for f in result.failures() {
        *failed.entry(f.request.as_str()).or_default() += 1;
    }
    ensure!(failed == expected, "failing set {failed:?}");
    ensure!(
        result.assertions_passed == 291 - 33,
        "{} passed",
        result.assertions_passed
    );
    Ok(())
}

fn brute_pass_at_k(n: u32, c: u32, k: u32) -> f64 {
    let (mut total, mut hit) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != k {
            continue;
        }
        total += 1;
        if mask & ((1u32 << c) - 1) != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn ac07_pass_at_k() -> Check {
    for n in 1..=6u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(n as u64, c as u64, k as u64).map_err(|e| e.to_string())?;
                let want = brute_pass_at_k(n, c, k);
                ensure!(
                    close(got, want, 1e-12),
                    "n={n} c={c} k={k}: {got} vs {want}"
                );
            }
        }
    }
    ensure!(pass_at_k(2, 1, 3).is_err(), "k > n accepted");
    Ok(())
}

/// `(task, [(passed of 100, compliant); 3])` per configuration.
type Plan = [(&'static str, [(usize, bool); 3]); 4];

const PLAN_A: Plan = [
    ("flask-openapi", [(100, true), (100, true), (70, true)]),
    (
        "flask-openapi-clean_architecture",
        [(80, true), (80, true), (80, false)],
    ),
    ("flask-openapi-sqlite", [(60, true), (90, true), (90, true)]),
    (
        "flask-openapi-clean_architecture-sqlite",
        [(50, false), (50, false), (50, true)],
    ),
];

const PLAN_B: Plan = [
    ("flask-openapi", [(100, true), (100, true), (100, true)]),
    (
        "flask-openapi-clean_architecture",
        [(100, true), (100, true), (40, true)],
    ),
    ("flask-openapi-sqlite", [(70, true), (70, true), (70, true)]),
    (
        "flask-openapi-clean_architecture-sqlite",
        [(100, true), (40, true), (40, true)],
    ),
];

fn synthetic_records() -> Vec<RunRecord> {
    let collection = conduit_collection();
    let template = PromptTemplate::builtin();
    let mut out = Vec::new();
    for (agent, model, plan) in [
        ("agent-a", "model-a", PLAN_A),
        ("agent-b", "model-b", PLAN_B),
    ] {
        let opts = EvalOptions {
            agent: agent.into(),
            model: model.into(),
            ..EvalOptions::default()
        };
        for (id, trials) in plan {
            let (fw, c) = parse_task_id(id).expect("valid id");
            let task: TaskSpec = generation_task(fw, c, &template, CONDUIT_OPENAPI).unwrap();
            for (trial, (passed, compliant)) in trials.into_iter().enumerate() {
                let mut r = failed_record(
                    &task,
                    trial as u32,
                    &collection,
                    &opts,
                    RunStatus::Completed,
                    "synthetic",
                );
                r.run_id = format!("{agent}.{}", r.run_id);
                r.suite.assertions_total = 100;
                r.suite.assertions_passed = passed;
                r.suite.per_assertion.clear();
                r.structurally_compliant = compliant;
                r.patch_applied = true;
                r.server_started = true;
                r.health_ok = true;
                out.push(r);
            }
        }
    }
    out
}

fn ac08_metrics_oracle() -> Check {
    let records = synthetic_records();
    ensure!(records.len() == 24, "{} runs", records.len());
    let scores: Vec<RunScore> = records.iter().map(|r| r.score()).collect();
    let (a, b) = scores.split_at(12);
    let pct = |runs: &[RunScore], enforced| assert_pct(runs, enforced).unwrap();
    const TOL: f64 = 1e-9;

    // Per-task means (raw): A = 90, 80, 80, 50; B = 100, 80, 70, 60.
    // Enforced: A = 90, 160/3, 80, 50/3; B unchanged.
    ensure!(close(pct(a, false), 75.0, TOL), "A raw {}", pct(a, false));
    ensure!(
        close(pct(a, true), 60.0, TOL),
        "A enforced {}",
        pct(a, true)
    );
    ensure!(close(pct(b, false), 77.5, TOL), "B raw {}", pct(b, false));
    ensure!(
        close(pct(b, true), 77.5, TOL),
        "B enforced {}",
        pct(b, true)
    );
    ensure!(
        close(pct(&scores, false), 76.25, TOL),
        "raw {}",
        pct(&scores, false)
    );
    ensure!(
        close(pct(&scores, true), 68.75, TOL),
        "enforced {}",
        pct(&scores, true)
    );

    // Architecture deltas: A -110/3, -190/3; B -20, -10.
    let arch =
        marginal_effect(&scores, ConstraintAxis::Architecture, true).map_err(|e| e.to_string())?;
    ensure!(arch.pairs == 4, "{} architecture pairs", arch.pairs);
    ensure!(
        close(arch.mean_delta, -32.5, TOL),
        "arch mean {}",
        arch.mean_delta
    );
    let want_se = (58700.0f64 / 432.0).sqrt();
    ensure!(
        arch.stderr.is_some_and(|s| close(s, want_se, TOL)),
        "arch stderr {:?} vs {want_se}",
        arch.stderr
    );
    // SQLite deltas: A -10, -110/3; B -30, -20.
    let sqlite =
        marginal_effect(&scores, ConstraintAxis::Sqlite, true).map_err(|e| e.to_string())?;
    ensure!(
        close(sqlite.mean_delta, -290.0 / 12.0, TOL),
        "sqlite mean {}",
        sqlite.mean_delta
    );
    let want_se = (58800.0f64 / 1728.0).sqrt();
    ensure!(
        sqlite.stderr.is_some_and(|s| close(s, want_se, TOL)),
        "sqlite stderr {:?} vs {want_se}",
        sqlite.stderr
    );
    ensure!(
        marginal_effect(&scores, ConstraintAxis::Sqlalchemy, true).is_err(),
        "orm axis found pairs"
    );

    // Per-task raw A% of A against B: r = 5/sqrt(35); ranks (4, 2.5, 2.5, 1)
    // against (4, 3, 2, 1) give rho = sqrt(0.9).
    let c = correlations(&[90.0, 80.0, 80.0, 50.0], &[100.0, 80.0, 70.0, 60.0])
        .map_err(|e| e.to_string())?;
    ensure!(
        close(c.pearson, 5.0 / 35f64.sqrt(), TOL),
        "pearson {}",
        c.pearson
    );
    ensure!(
        close(c.spearman, 0.9f64.sqrt(), TOL),
        "spearman {}",
        c.spearman
    );

    // Full-pass agreement between the configurations, slot by slot: 8 of 12
    // agree, marginals 2/12 and 6/12 positive, so p_e = 1/2 and kappa = 1/3.
    let fa: Vec<bool> = a.iter().map(|s| s.full_pass).collect();
    let fb: Vec<bool> = b.iter().map(|s| s.full_pass).collect();
    let kappa = cohen_kappa(&fa, &fb).map_err(|e| e.to_string())?;
    ensure!(close(kappa, 1.0 / 3.0, TOL), "kappa {kappa}");

    // Tables through the CLI, twice, from the same results directory.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let index = CampaignIndex {
        version: 1,
        provider: "synthetic".into(),
        agent: "mixed".into(),
        model: "mixed".into(),
        trials: 3,
        tasks: PLAN_A.iter().map(|(id, _)| id.to_string()).collect(),
        runs: records
            .iter()
            .map(|r| IndexEntry {
                run_id: r.run_id.clone(),
                task_id: r.task_id.clone(),
                trial: r.trial,
                status: r.status,
                file: format!("runs/{}.json", r.run_id),
            })
            .collect(),
    };
    save_results(tmp.path(), &index, &records).map_err(|e| e.to_string())?;
    let runs = tmp.path().to_str().unwrap();
    let outs = [tmp.path().join("t1"), tmp.path().join("t2")];
    for out in &outs {
        run_bin(&["report", "--runs", runs, "--out", out.to_str().unwrap()])?;
    }
    let mut files = 0;
    for entry in std::fs::read_dir(&outs[0]).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let x = std::fs::read(outs[0].join(&name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(outs[1].join(&name)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{name:?} differs between runs");
        files += 1;
    }
    ensure!(files == 18, "{files} report files");
    let level_csv =
        std::fs::read_to_string(outs[0].join("a_pct_by_level.csv")).map_err(|e| e.to_string())?;
    ensure!(
        level_csv.contains("agent-a,model-a,90.0,66.7,16.7,-,60.0"),
        "a_pct_by_level:\n{level_csv}"
    );
    ensure!(
        level_csv.contains("agent-b,model-b,100.0,75.0,60.0,-,77.5"),
        "a_pct_by_level:\n{level_csv}"
    );
    let effects =
        std::fs::read_to_string(outs[0].join("marginal_effects.csv")).map_err(|e| e.to_string())?;
    ensure!(
        effects.contains("architecture,-32.5,11.7,4,"),
        "marginal_effects:\n{effects}"
    );
    let bundle = build_report(&records, None, &[TableKind::PassAt1ByLevel]);
    let rows = &bundle.tables[0].rows;
    ensure!(
        rows[0][6] == "16.7" && rows[1][6] == "50.0",
        "pass@1 rows {rows:?}"
    );
    Ok(())
}

fn ac09_taxonomy() -> Check {
    let mut labels = Vec::new();
    let mut push = |coarse: CoarseCategory, sub: Option<LogicSubcategory>| {
        labels.push(FailureLabel {
            run_id: format!("run-{}", labels.len()),
            coarse,
            sub,
            rationale: String::new(),
            source: LabelSource::Human,
        })
    };
    let subs = LogicSubcategory::ALL;
    for i in 0..137 {
        push(CoarseCategory::LogicError, Some(subs[i % subs.len()]));
    }
    let others = [
        (CoarseCategory::ServerStartupFailure, 20),
        (CoarseCategory::IncompleteImplementation, 15),
        (CoarseCategory::SchemaFormatError, 10),
        (CoarseCategory::StuckInLoop, 7),
        (CoarseCategory::ConstraintViolation, 5),
    ];
    for (c, n) in others {
        for _ in 0..n {
            push(c, None);
        }
    }
    ensure!(labels.len() == 194, "{} labels", labels.len());
    let t = aggregate_taxonomy(&labels);
    let logic = t
        .coarse
        .iter()
        .find(|c| c.category == "logic_error")
        .unwrap();
    ensure!(
        format!("{:.1}", logic.pct) == "70.6",
        "logic share {}",
        logic.pct
    );
    let sub_total: f64 = t.sub.iter().map(|s| s.pct).sum();
    ensure!(
        close(sub_total, 100.0, 1e-9),
        "sub shares sum to {sub_total}"
    );

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("labels.jsonl");
    write_labels(std::fs::File::create(&path).unwrap(), &labels).map_err(|e| e.to_string())?;
    let text = run_bin(&["taxonomy", "aggregate", "--labels", path.to_str().unwrap()])?;
    ensure!(
        text.lines().any(|l| l.contains("logic_error")
            && l.contains("137")
            && l.trim_end().ends_with("70.6")),
        "cli output:\n{text}"
    );
    Ok(())
}

fn replay_campaign(
    patches: &Path,
    out: &Path,
    tasks: &[TaskSpec],
    workers: usize,
) -> Result<Vec<RunRecord>, String> {
    let mut eval = EvalOptions {
        setup_override: Some(vec!["chmod +x run.sh".into()]),
        ..EvalOptions::default()
    };
    eval.health.interval = Duration::from_millis(200);
    eval.health.max_attempts = 150;
    eval.health.total_timeout = Duration::from_secs(30);
    eval.shutdown_grace = Duration::from_secs(2);
    let options = CampaignOptions {
        trials: 2,
        workers,
        ports: (0..4).map(|_| free_port()).collect(),
        eval,
        out_dir: Some(out.to_path_buf()),
    };
    run_campaign(
        tasks,
        &PatchProvider::RecordedDirectory(patches.to_path_buf()),
        &conduit_collection(),
        &options,
    )
    .map_err(|e| e.to_string())
}

fn ac10_replay_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let patches = tmp.path().join("patches");
    let template = PromptTemplate::builtin();
    let layered_task = {
        let (fw, c) = parse_task_id(GOLDEN_TASK).unwrap();
        generation_task(fw, c, &template, CONDUIT_OPENAPI).unwrap()
    };
    let mono_task = generation_task(
        Framework::Flask,
        ConstraintSet::new(true, Database::None, false).unwrap(),
        &template,
        CONDUIT_OPENAPI,
    )
    .unwrap();
    golden::write_recorded(&patches, &layered_task.id, &golden::layered_diff())
        .map_err(|e| e.to_string())?;
    golden::write_recorded(&patches, &mono_task.id, &golden::monolithic_diff())
        .map_err(|e| e.to_string())?;
    let tasks = [layered_task, mono_task];
    let first = replay_campaign(&patches, &tmp.path().join("r1"), &tasks, 2)?;
    let second = replay_campaign(&patches, &tmp.path().join("r2"), &tasks, 1)?;
    ensure!(
        first.len() == 4 && second.len() == 4,
        "record counts {} / {}",
        first.len(),
        second.len()
    );
    ensure!(
        first.iter().all(|r| r.suite.assertions_passed == 291),
        "a golden run did not pass the suite"
    );
    for (x, y) in first.iter().zip(&second) {
        ensure!(
            x.comparable_json() == y.comparable_json(),
            "{} differs between campaigns",
            x.run_id
        );
    }
    Ok(())
}

fn main() {
    let checks: [Criterion; 10] = [
        (
            "ac01",
            "task matrix: 80 tasks, levels 8/24/32/16, < 1s",
            ac01_task_matrix,
        ),
        (
            "ac02",
            "prompt blocks follow constraints; golden prompts",
            ac02_prompt_rendering,
        ),
        (
            "ac03",
            "verifier fixture corpus matches hand verdicts",
            ac03_verifier_fixtures,
        ),
        (
            "ac04",
            "collection: 32 requests, 291 assertions, folder counts",
            ac04_collection_counts,
        ),
        (
            "ac05",
            "end-to-end golden 291/291 compliant; monolith enforced 0",
            ac05_end_to_end_golden,
        ),
        (
            "ac06",
            "comments disabled: exactly the comment assertions fail",
            ac06_comments_disabled,
        ),
        ("ac07", "pass@k equals subset enumeration", ac07_pass_at_k),
        (
            "ac08",
            "24-run metrics oracle and byte-identical tables",
            ac08_metrics_oracle,
        ),
        (
            "ac09",
            "taxonomy: 137 of 194 logic errors is 70.6%",
            ac09_taxonomy,
        ),
        (
            "ac10",
            "replay determinism over recorded golden patches",
            ac10_replay_determinism,
        ),
    ];
    // Keep the default panic message out of the PASS/FAIL listing.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {id} {name} ({secs:.2}s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {id} {name} ({secs:.2}s): {reason}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

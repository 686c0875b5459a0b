use std::path::PathBuf;

use structbench_core::task::{
    enumerate_variants, prompt_headings, render_prompt, ConstraintSet, Database, Framework,
    PromptTemplate, CONDUIT_OPENAPI,
};

const STUB_SPEC: &str = "openapi: 3.0.1\ninfo:\n  title: Stub\npaths:\n  /articles/{slug}: {}\n";

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against `tests/golden/<name>`; set `UPDATE_GOLDEN=1` to rewrite.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

#[test]
fn golden_prompts_per_runtime() {
    let l3 = ConstraintSet::new(true, Database::Postgres, true).unwrap();
    for (fw, tag) in [(Framework::Flask, "flask"), (Framework::Express, "express")] {
        let l0 = render_prompt(fw, &ConstraintSet::BASELINE, STUB_SPEC).unwrap();
        check_golden(&format!("{tag}-l0.txt"), &l0);
        let full = render_prompt(fw, &l3, STUB_SPEC).unwrap();
        check_golden(&format!("{tag}-l3.txt"), &full);
    }
}

#[test]
fn loaded_templates_match_builtin() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/templates");
    assert_eq!(
        PromptTemplate::load(&dir).unwrap(),
        PromptTemplate::builtin()
    );
}

fn blocks(prompt: &str) -> Vec<&'static str> {
    let mut out = Vec::new();
    if prompt.contains("## Architecture") {
        out.push("architecture");
    }
    if prompt.contains("Use **SQLite**") {
        out.push("sqlite");
    }
    if prompt.contains("Use **PostgreSQL**") {
        out.push("postgres");
    }
    if prompt.contains("ORM for handling the database") {
        out.push("orm");
    }
    out
}

#[test]
fn blocks_follow_constraints_and_nest() {
    let tasks =
        enumerate_variants(&Framework::ALL, &PromptTemplate::builtin(), CONDUIT_OPENAPI).unwrap();
    assert_eq!(tasks.len(), 80);
    for t in &tasks {
        let got = blocks(&t.prompt);
        let mut want = Vec::new();
        if t.constraints.architecture {
            want.push("architecture");
        }
        match t.constraints.database {
            Database::Sqlite => want.push("sqlite"),
            Database::Postgres => want.push("postgres"),
            Database::None => {}
        }
        if t.constraints.orm {
            want.push("orm");
        }
        assert_eq!(got, want, "{}", t.id);
        assert!(t.prompt.starts_with(CONDUIT_OPENAPI.trim_end()));
        let headings = prompt_headings(&t.prompt);
        assert!(headings.iter().any(|h| h == "## Evaluation Pipeline"));
    }
    // Superset chain: a task's blocks include those of every task whose
    // constraints are a subset of its own.
    for a in &tasks {
        for b in &tasks {
            if a.framework != b.framework {
                continue;
            }
            let subset = (!a.constraints.architecture || b.constraints.architecture)
                && (a.constraints.database == Database::None
                    || a.constraints.database == b.constraints.database)
                && (!a.constraints.orm || b.constraints.orm);
            if subset {
                let bb = blocks(&b.prompt);
                assert!(
                    blocks(&a.prompt).iter().all(|x| bb.contains(x)),
                    "{} ⊄ {}",
                    a.id,
                    b.id
                );
            }
        }
    }
}

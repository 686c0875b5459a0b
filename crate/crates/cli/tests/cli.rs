use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_structbench"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["no-such-command"]).0, 1);
    assert_eq!(run(&["compose", "--frameworks", "rails"]).0, 1);
    assert_eq!(
        run(&[
            "evaluate",
            "--provider",
            "ftp:x",
            "--task",
            "flask-openapi",
            "--out",
            "/tmp/x"
        ])
        .0,
        1
    );
    let empty = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "report",
        "--runs",
        empty.path().to_str().unwrap(),
        "--out",
        "/tmp/never",
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("index.json"), "{err}");
    let (code, _, _) = run(&[
        "report",
        "--runs",
        "/nonexistent/dir",
        "--out",
        "/tmp/never",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn verify_and_inspect_golden_patch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["diff", "golden", "--out", out]).0, 0);
    let patch = dir
        .path()
        .join("flask-openapi-clean_architecture-sqlite-sqlalchemy.diff");
    let patch = patch.to_str().unwrap();
    let (code, text, _) = run(&["diff", "inspect", patch]);
    assert_eq!(code, 0);
    assert!(text.contains("app/services/users.py"), "{text}");
    assert!(text.trim_end().ends_with("added lines"));

    let (code, text, err) = run(&[
        "verify",
        "--task",
        "flask-openapi-clean_architecture-sqlite-sqlalchemy",
        "--patch",
        patch,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("architecture: compliant"), "{text}");
    assert!(text.contains("overall: compliant"), "{text}");

    let (code, text, _) = run(&[
        "verify",
        "--task",
        "flask-openapi-postgres",
        "--patch",
        patch,
        "--json",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["compliant"], false);
}

#[test]
fn reference_server_and_run_suite() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut server = bin()
        .args([
            "reference-server",
            "--port",
            &port.to_string(),
            "--disable",
            "favorites",
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    assert!(line.contains("listening"), "{line}");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("suite.csv");
    let (code, text, err) = run(&[
        "run-suite",
        "--base-url",
        &format!("http://127.0.0.1:{port}/api"),
        "--wait-healthy",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    server.kill().unwrap();
    server.wait().unwrap();
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("264/291 assertions passed"), "{text}");
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 292);
}

#[test]
fn report_warns_without_matched_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let patches = dir.path().join("p");
    let results = dir.path().join("r");
    assert_eq!(
        run(&[
            "diff",
            "golden",
            "--variant",
            "monolithic",
            "--out",
            patches.to_str().unwrap()
        ])
        .0,
        0
    );
    let (code, _, err) = run(&[
        "evaluate",
        "--task",
        "flask-openapi-clean_architecture-sqlite-sqlalchemy",
        "--task",
        "flask-openapi-postgres",
        "--provider",
        &format!("recorded:{}", patches.display()),
        "--trials",
        "1",
        "--setup",
        "true",
        "--out",
        results.to_str().unwrap(),
    ]);
    // The postgres task has no recorded patch: a provider error, recorded
    // as an internal error for that run.
    assert_eq!(code, 3, "{err}");
    let tables = dir.path().join("t");
    let (code, text, err) = run(&[
        "report",
        "--runs",
        results.to_str().unwrap(),
        "--out",
        tables.to_str().unwrap(),
        "--tables",
        "marginal_effects,taxonomy",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(
        text.contains("warning: campaign has no matched pairs"),
        "{text}"
    );
    assert!(text.contains("constraint_violation"), "{text}");
    let mut names: Vec<String> = std::fs::read_dir(&tables)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6, "{names:?}");
    let (code, _, _) = run(&[
        "report",
        "--runs",
        results.to_str().unwrap(),
        "--out",
        tables.to_str().unwrap(),
        "--tables",
        "table_9",
    ]);
    assert_eq!(code, 1);
}

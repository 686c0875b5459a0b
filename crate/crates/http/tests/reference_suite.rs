use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::time::Duration;

use structbench_http::server::{serve, Feature, ServerOptions};
use structbench_http::suite::{
    conduit_collection, poll_health, run_suite, HealthPolicy, SuiteResult, SuiteRunner,
};

fn run_against(disabled: &[Feature]) -> SuiteResult {
    let options = ServerOptions {
        disabled: disabled.iter().copied().collect(),
        ..Default::default()
    };
    let server = serve(0, options).unwrap();
    let result = run_suite(&conduit_collection(), &server.api_url(), &BTreeMap::new());
    server.shutdown();
    result
}

#[test]
fn shipped_collection_counts() {
    let c = conduit_collection();
    assert_eq!(c.total_requests(), 32);
    assert_eq!(c.total_assertions(), 291);
    let counts: Vec<(String, usize, usize)> = c
        .folder_counts()
        .into_iter()
        .map(|f| (f.folder, f.requests, f.assertions))
        .collect();
    let expected = [
        ("Auth", 5, 30),
        ("Articles", 4, 20),
        ("Articles, Favorites, Comments", 18, 212),
        ("Profiles", 4, 26),
        ("Tags", 1, 3),
    ];
    assert_eq!(counts.len(), expected.len());
    for ((name, r, a), (en, er, ea)) in counts.iter().zip(expected) {
        assert_eq!((name.as_str(), *r, *a), (en, er, ea));
    }
    let kinds: BTreeSet<&str> = c
        .requests()
        .flat_map(|(_, r)| r.assertions.iter().map(|a| a.kind_name()))
        .collect();
    assert_eq!(kinds.len(), 4, "{kinds:?}");
}

#[test]
fn reference_server_passes_everything() {
    let result = run_against(&[]);
    let failures: Vec<String> = result
        .failures()
        .map(|f| format!("{} / {} #{}: {}", f.folder, f.request, f.index, f.detail))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
    assert_eq!(result.requests_executed, 32);
    assert_eq!(
        (result.assertions_passed, result.assertions_total),
        (291, 291)
    );
    assert_eq!(result.fraction(), 1.0);
}

#[test]
fn disabled_features_fail_exactly_their_assertions() {
    for (feature, expected_failures) in [
        (Feature::Comments, 33),
        (Feature::Favorites, 27),
        (Feature::Profiles, 20),
    ] {
        let result = run_against(&[feature]);
        assert_eq!(result.assertions_total, 291);
        assert_eq!(
            result.assertions_total - result.assertions_passed,
            expected_failures,
            "{feature}: {:#?}",
            result
                .failures()
                .map(|f| (&f.request, &f.detail))
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run_against(&[Feature::Favorites]);
    let b = run_against(&[Feature::Favorites]);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn closed_port_fails_every_assertion_without_leaking_address() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let base = format!("http://127.0.0.1:{port}/api");
    let runner = SuiteRunner::new(Duration::from_secs(2));
    let result = runner.run(&conduit_collection(), &base, &BTreeMap::new());
    assert_eq!(result.assertions_total, 291);
    assert_eq!(result.assertions_passed, 0);
    for f in result.failures() {
        assert!(!f.detail.contains(&port.to_string()), "{}", f.detail);
    }
    assert!(result
        .failures()
        .any(|f| f.detail.starts_with("connection failure")));

    let policy = HealthPolicy {
        interval: Duration::from_millis(10),
        max_attempts: 3,
        total_timeout: Duration::from_secs(5),
        request_timeout: Duration::from_millis(200),
    };
    let outcome = poll_health(&base, &policy);
    assert!(!outcome.healthy);
    assert_eq!(outcome.attempts, 3);
}

#[test]
fn busy_port_is_an_error() {
    let first = serve(0, ServerOptions::default()).unwrap();
    assert!(serve(first.port(), ServerOptions::default()).is_err());
    let outcome = poll_health(&first.api_url(), &HealthPolicy::default());
    assert!(outcome.healthy);
    assert_eq!(outcome.attempts, 1);
}

#[test]
fn reset_endpoint_requires_token() {
    let options = ServerOptions {
        reset_token: Some("s3cret".into()),
        ..Default::default()
    };
    let server = serve(0, options).unwrap();
    let collection = conduit_collection();
    let first = run_suite(&collection, &server.api_url(), &BTreeMap::new());
    assert!(first.all_passed());
    // Registering the same users again fails until the store is cleared.
    let second = run_suite(&collection, &server.api_url(), &BTreeMap::new());
    assert!(!second.all_passed());

    let agent = ureq_agent();
    let denied = agent
        .post(&format!("{}/__reset", server.api_url()))
        .header("X-Reset-Token", "wrong")
        .send_empty()
        .unwrap();
    assert_eq!(denied.status().as_u16(), 401);
    let ok = agent
        .post(&format!("{}/__reset", server.api_url()))
        .header("X-Reset-Token", "s3cret")
        .send_empty()
        .unwrap();
    assert_eq!(ok.status().as_u16(), 200);
    let third = run_suite(&collection, &server.api_url(), &BTreeMap::new());
    assert!(third.all_passed());
}

fn ureq_agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

//! Sequential execution of a collection against a live server.

use std::collections::BTreeMap;
use std::io;
use std::time::Duration;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use ureq::http;

use super::collection::{Assertion, JsonType, RequestSpec, TestCollection, Transition};
use super::template::{lookup, render_str, render_value, Variables};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub folder: String,
    pub request: String,
    /// Position of the assertion within its request, starting at 0.
    pub index: usize,
    pub kind: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolderSummary {
    pub folder: String,
    pub passed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub requests_executed: usize,
    pub assertions_total: usize,
    pub assertions_passed: usize,
    pub per_assertion: Vec<AssertionOutcome>,
}

impl SuiteResult {
    /// Every assertion of the collection recorded as failed with `detail`;
    /// used when the suite cannot run at all.
    pub fn all_failed(collection: &TestCollection, detail: &str) -> SuiteResult {
        let mut per_assertion = Vec::new();
        for (folder, request) in collection.requests() {
            for (index, a) in request.assertions.iter().enumerate() {
                per_assertion.push(AssertionOutcome {
                    folder: folder.name.clone(),
                    request: request.name.clone(),
                    index,
                    kind: a.kind_name().to_string(),
                    passed: false,
                    detail: detail.to_string(),
                });
            }
        }
        SuiteResult {
            requests_executed: 0,
            assertions_total: per_assertion.len(),
            assertions_passed: 0,
            per_assertion,
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.assertions_total == 0 {
            0.0
        } else {
            self.assertions_passed as f64 / self.assertions_total as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.assertions_total > 0 && self.assertions_passed == self.assertions_total
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionOutcome> {
        self.per_assertion.iter().filter(|a| !a.passed)
    }

    /// Pass counts per folder in execution order.
    pub fn folder_summary(&self) -> Vec<FolderSummary> {
        let mut out: Vec<FolderSummary> = Vec::new();
        for a in &self.per_assertion {
            match out.last_mut() {
                Some(last) if last.folder == a.folder => {
                    last.total += 1;
                    last.passed += usize::from(a.passed);
                }
                _ => out.push(FolderSummary {
                    folder: a.folder.clone(),
                    passed: usize::from(a.passed),
                    total: 1,
                }),
            }
        }
        out
    }

    /// One row per assertion: folder,request,index,kind,passed,detail.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["folder", "request", "index", "kind", "passed", "detail"])
            .expect("in-memory write");
        for a in &self.per_assertion {
            w.write_record([
                a.folder.as_str(),
                a.request.as_str(),
                &a.index.to_string(),
                a.kind.as_str(),
                if a.passed { "true" } else { "false" },
                a.detail.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

struct Reply {
    status: u16,
    json: Option<Value>,
}

/// Runs collections over HTTP with one blocking client.
pub struct SuiteRunner {
    agent: ureq::Agent,
}

impl Default for SuiteRunner {
    fn default() -> Self {
        SuiteRunner::new(DEFAULT_REQUEST_TIMEOUT)
    }
}

impl SuiteRunner {
    pub fn new(request_timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(request_timeout))
            .http_status_as_error(false)
            .build();
        SuiteRunner {
            agent: config.into(),
        }
    }

    /// Executes every request in order. `base_url` is the API root (for
    /// Conduit, `http://host:port/api`). `globals` override the collection's
    /// default variables.
    pub fn run(
        &self,
        collection: &TestCollection,
        base_url: &str,
        globals: &BTreeMap<String, String>,
    ) -> SuiteResult {
        let base = base_url.trim_end_matches('/');
        let mut vars: Variables = collection
            .variables
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        for (k, v) in globals {
            vars.insert(k.clone(), Value::String(v.clone()));
        }

        let mut per_assertion = Vec::new();
        let mut executed = 0;
        for (folder, request) in collection.requests() {
            let mut record = |index: usize, a: &Assertion, result: Result<(), String>| {
                per_assertion.push(AssertionOutcome {
                    folder: folder.name.clone(),
                    request: request.name.clone(),
                    index,
                    kind: a.kind_name().to_string(),
                    passed: result.is_ok(),
                    detail: result.err().unwrap_or_else(|| "ok".to_string()),
                });
            };
            let reply = match self.send(base, request, &vars) {
                Ok(reply) => {
                    executed += 1;
                    reply
                }
                Err(detail) => {
                    for (i, a) in request.assertions.iter().enumerate() {
                        record(i, a, Err(detail.clone()));
                    }
                    continue;
                }
            };
            for (i, a) in request.assertions.iter().enumerate() {
                record(i, a, evaluate(a, &reply, &vars));
            }
            if let Some(body) = &reply.json {
                for c in &request.captures {
                    if let Some(v) = lookup(body, &c.path) {
                        vars.insert(c.var.clone(), v.clone());
                    }
                }
            }
        }
        let passed = per_assertion.iter().filter(|a| a.passed).count();
        SuiteResult {
            requests_executed: executed,
            assertions_total: per_assertion.len(),
            assertions_passed: passed,
            per_assertion,
        }
    }

    fn send(&self, base: &str, request: &RequestSpec, vars: &Variables) -> Result<Reply, String> {
        let unresolved = |name: String| format!("not executed: unresolved variable `{name}`");
        let path = render_str(&request.path, vars).map_err(unresolved)?;
        let mut builder = http::Request::builder()
            .method(request.method.to_ascii_uppercase().as_str())
            .uri(format!("{base}{path}"))
            .header("Accept", "application/json");
        for (k, v) in &request.headers {
            builder = builder.header(k.as_str(), render_str(v, vars).map_err(unresolved)?);
        }
        let result = match &request.body {
            Some(body) => {
                let body = render_value(body, vars).map_err(unresolved)?;
                let req = builder
                    .header("Content-Type", "application/json")
                    .body(body.to_string().into_bytes())
                    .map_err(|e| format!("invalid request: {e}"))?;
                self.agent.run(req)
            }
            // Bodyless POST/PUT/PATCH go out with `Content-Length: 0` rather
            // than an empty chunked body, which minimal servers mis-parse.
            None if matches!(
                request.method.to_ascii_uppercase().as_str(),
                "POST" | "PUT" | "PATCH"
            ) =>
            {
                let req = builder
                    .header("Content-Length", "0")
                    .body(Vec::<u8>::new())
                    .map_err(|e| format!("invalid request: {e}"))?;
                self.agent.run(req)
            }
            None => {
                let req = builder
                    .body(())
                    .map_err(|e| format!("invalid request: {e}"))?;
                self.agent.run(req)
            }
        };
        let mut response = result.map_err(|e| transport_detail(&e))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().unwrap_or_default();
        Ok(Reply {
            status,
            json: serde_json::from_str(&text).ok(),
        })
    }
}

/// Categorized transport failure, free of host and port so results are
/// comparable across runs.
fn transport_detail(err: &ureq::Error) -> String {
    let category = match err {
        ureq::Error::Io(e) => match e.kind() {
            io::ErrorKind::ConnectionRefused => "connection refused",
            io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => "connection reset",
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => "request timed out",
            io::ErrorKind::UnexpectedEof => "connection closed",
            _ => "i/o error",
        },
        ureq::Error::Timeout(_) => "request timed out",
        ureq::Error::HostNotFound => "host not found",
        ureq::Error::ConnectionFailed => "connection failed",
        ureq::Error::Protocol(_) => "protocol error",
        _ => "transport error",
    };
    format!("connection failure: {category}")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

static TIMESTAMP: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?$").unwrap()
});

fn type_matches(expect: JsonType, v: &Value) -> bool {
    match expect {
        JsonType::String => v.is_string(),
        JsonType::Number => v.is_number(),
        JsonType::Integer => {
            v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|f| f.fract() == 0.0)
        }
        JsonType::Boolean => v.is_boolean(),
        JsonType::Array => v.is_array(),
        JsonType::Object => v.is_object(),
        JsonType::Null => v.is_null(),
        JsonType::Timestamp => v.as_str().is_some_and(|s| TIMESTAMP.is_match(s)),
        JsonType::NullableString => v.is_null() || v.is_string(),
    }
}

fn type_label(t: JsonType) -> &'static str {
    match t {
        JsonType::String => "string",
        JsonType::Number => "number",
        JsonType::Integer => "integer",
        JsonType::Boolean => "boolean",
        JsonType::Array => "array",
        JsonType::Object => "object",
        JsonType::Null => "null",
        JsonType::Timestamp => "timestamp",
        JsonType::NullableString => "string or null",
    }
}

fn json_eq(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if a.is_number() && b.is_number() => x == y,
        _ => a == b,
    }
}

fn short(v: &Value) -> String {
    let s = v.to_string();
    if s.chars().count() > 60 {
        let cut: String = s.chars().take(57).collect();
        format!("{cut}...")
    } else {
        s
    }
}

fn target<'a>(reply: &'a Reply, path: &str) -> Result<&'a Value, String> {
    let body = reply
        .json
        .as_ref()
        .ok_or_else(|| "response body is not JSON".to_string())?;
    lookup(body, path).ok_or_else(|| format!("property `{path}` missing"))
}

fn prior<'a>(vars: &'a Variables, name: &str) -> Result<&'a Value, String> {
    vars.get(name)
        .ok_or_else(|| format!("unresolved variable `{name}`"))
}

fn number(v: &Value, what: &str) -> Result<f64, String> {
    v.as_f64()
        .ok_or_else(|| format!("{what} is not a number ({})", short(v)))
}

fn evaluate(assertion: &Assertion, reply: &Reply, vars: &Variables) -> Result<(), String> {
    match assertion {
        Assertion::StatusCode { expect } => {
            if expect.accepts(reply.status) {
                Ok(())
            } else {
                Err(format!("expected status {expect}, got {}", reply.status))
            }
        }
        Assertion::PropertyPresence { target: path } => target(reply, path).map(|_| ()),
        Assertion::TypeValidation {
            target: path,
            expect,
        } => {
            let v = target(reply, path)?;
            if type_matches(*expect, v) {
                Ok(())
            } else {
                Err(format!(
                    "expected {} at `{path}`, got {}",
                    type_label(*expect),
                    type_name(v)
                ))
            }
        }
        Assertion::StateTransition {
            target: path,
            transition,
        } => {
            let now = target(reply, path)?;
            match transition {
                Transition::Becomes { prior: p, value } => {
                    let before = prior(vars, p)?;
                    let value = render_value(value, vars)
                        .map_err(|n| format!("unresolved variable `{n}`"))?;
                    if json_eq(before, &value) {
                        Err(format!("`{path}` was already {} before", short(&value)))
                    } else if !json_eq(now, &value) {
                        Err(format!(
                            "`{path}` expected to become {}, is {}",
                            short(&value),
                            short(now)
                        ))
                    } else {
                        Ok(())
                    }
                }
                Transition::IncreasedBy { prior: p, delta }
                | Transition::DecreasedBy { prior: p, delta } => {
                    let sign = if matches!(transition, Transition::IncreasedBy { .. }) {
                        1.0
                    } else {
                        -1.0
                    };
                    let before = number(prior(vars, p)?, "prior value")?;
                    let now = number(now, &format!("`{path}`"))?;
                    let want = before + sign * delta;
                    if now == want {
                        Ok(())
                    } else {
                        Err(format!(
                            "`{path}` expected {want} (from {before}), is {now}"
                        ))
                    }
                }
                Transition::Unchanged { prior: p } => {
                    let before = prior(vars, p)?;
                    if json_eq(before, now) {
                        Ok(())
                    } else {
                        Err(format!(
                            "`{path}` changed from {} to {}",
                            short(before),
                            short(now)
                        ))
                    }
                }
                Transition::Equals { value } => {
                    let value = render_value(value, vars)
                        .map_err(|n| format!("unresolved variable `{n}`"))?;
                    if json_eq(now, &value) {
                        Ok(())
                    } else {
                        Err(format!(
                            "`{path}` expected {}, is {}",
                            short(&value),
                            short(now)
                        ))
                    }
                }
            }
        }
    }
}

/// Convenience wrapper around [`SuiteRunner::run`] with default settings.
pub fn run_suite(
    collection: &TestCollection,
    base_url: &str,
    globals: &BTreeMap<String, String>,
) -> SuiteResult {
    SuiteRunner::default().run(collection, base_url, globals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn reply(status: u16, body: Value) -> Reply {
        Reply {
            status,
            json: Some(body),
        }
    }

    #[test]
    fn types() {
        assert!(type_matches(JsonType::Integer, &json!(3)));
        assert!(!type_matches(JsonType::Integer, &json!(3.5)));
        assert!(type_matches(
            JsonType::Timestamp,
            &json!("2024-01-01T00:00:00.000Z")
        ));
        assert!(!type_matches(JsonType::Timestamp, &json!("yesterday")));
        assert!(type_matches(JsonType::NullableString, &Value::Null));
    }

    #[test]
    fn transitions() {
        let mut vars = Variables::new();
        vars.insert("before".into(), json!(0));
        vars.insert("fav".into(), json!(false));
        let r = reply(
            200,
            json!({"article": {"favoritesCount": 1, "favorited": true}}),
        );
        let inc = Assertion::StateTransition {
            target: "article.favoritesCount".into(),
            transition: Transition::IncreasedBy {
                prior: "before".into(),
                delta: 1.0,
            },
        };
        assert_eq!(evaluate(&inc, &r, &vars), Ok(()));
        let flip = Assertion::StateTransition {
            target: "article.favorited".into(),
            transition: Transition::Becomes {
                prior: "fav".into(),
                value: json!(true),
            },
        };
        assert_eq!(evaluate(&flip, &r, &vars), Ok(()));
        let missing = Assertion::StateTransition {
            target: "article.favorited".into(),
            transition: Transition::Unchanged {
                prior: "nope".into(),
            },
        };
        assert_eq!(
            evaluate(&missing, &r, &vars),
            Err("unresolved variable `nope`".into())
        );
    }

    #[test]
    fn presence_accepts_null() {
        let r = reply(200, json!({"user": {"bio": null}}));
        let a = Assertion::PropertyPresence {
            target: "user.bio".into(),
        };
        assert_eq!(evaluate(&a, &r, &Variables::new()), Ok(()));
    }
}

//! Collection document model, loading and static validation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::template::{placeholders_in_str, placeholders_in_value};

/// The shipped Conduit collection.
pub const CONDUIT_COLLECTION: &str = include_str!("../../assets/conduit.collection.json");

#[derive(Debug, Error)]
pub enum CollectionError {
    #[error("collection is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("folder `{folder}`, request `{request}`: {reason}")]
    Invalid {
        folder: String,
        request: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCollection {
    pub name: String,
    /// Default values for variables referenced before any capture.
    #[serde(default)]
    pub variables: BTreeMap<String, String>,
    #[serde(default)]
    pub folders: Vec<Folder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Folder {
    pub name: String,
    #[serde(default)]
    pub requests: Vec<RequestSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub name: String,
    pub method: String,
    /// Relative to the API base URL, e.g. `/articles/{{slug}}`.
    pub path: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
    #[serde(default)]
    pub captures: Vec<Capture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    pub var: String,
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsonType {
    String,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
    Null,
    /// ISO-8601 date-time string.
    Timestamp,
    NullableString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatusExpectation {
    One(u16),
    Any(Vec<u16>),
}

impl StatusExpectation {
    pub fn accepts(&self, status: u16) -> bool {
        match self {
            StatusExpectation::One(s) => *s == status,
            StatusExpectation::Any(list) => list.contains(&status),
        }
    }
}

impl std::fmt::Display for StatusExpectation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatusExpectation::One(s) => write!(f, "{s}"),
            StatusExpectation::Any(list) => {
                let parts: Vec<String> = list.iter().map(|s| s.to_string()).collect();
                write!(f, "one of {}", parts.join("/"))
            }
        }
    }
}

/// How a value relates to an earlier captured one (or to a fixed value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transition {
    /// Now equals `value` and the prior differed from it.
    Becomes {
        prior: String,
        value: Value,
    },
    IncreasedBy {
        prior: String,
        delta: f64,
    },
    DecreasedBy {
        prior: String,
        delta: f64,
    },
    Unchanged {
        prior: String,
    },
    /// Now equals `value` (strings are templated).
    Equals {
        value: Value,
    },
}

impl Transition {
    pub fn prior(&self) -> Option<&str> {
        match self {
            Transition::Becomes { prior, .. }
            | Transition::IncreasedBy { prior, .. }
            | Transition::DecreasedBy { prior, .. }
            | Transition::Unchanged { prior } => Some(prior),
            Transition::Equals { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assertion {
    StatusCode {
        expect: StatusExpectation,
    },
    PropertyPresence {
        target: String,
    },
    TypeValidation {
        target: String,
        expect: JsonType,
    },
    StateTransition {
        target: String,
        #[serde(flatten)]
        transition: Transition,
    },
}

impl Assertion {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Assertion::StatusCode { .. } => "status_code",
            Assertion::PropertyPresence { .. } => "property_presence",
            Assertion::TypeValidation { .. } => "type_validation",
            Assertion::StateTransition { .. } => "state_transition",
        }
    }

    /// Variables the assertion needs at evaluation time.
    pub fn referenced_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Assertion::StateTransition { transition, .. } = self {
            if let Some(prior) = transition.prior() {
                out.insert(prior.to_string());
            }
            match transition {
                Transition::Becomes { value, .. } | Transition::Equals { value } => {
                    out.extend(placeholders_in_value(value));
                }
                _ => {}
            }
        }
        out
    }
}

impl RequestSpec {
    /// Variables needed to build the HTTP request.
    pub fn request_variables(&self) -> BTreeSet<String> {
        let mut out = placeholders_in_str(&self.path);
        for v in self.headers.values() {
            out.extend(placeholders_in_str(v));
        }
        if let Some(body) = &self.body {
            out.extend(placeholders_in_value(body));
        }
        out
    }
}

const METHODS: [&str; 5] = ["GET", "POST", "PUT", "DELETE", "PATCH"];

/// Request and assertion totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolderCount {
    pub folder: String,
    pub requests: usize,
    pub assertions: usize,
}

impl TestCollection {
    pub fn requests(&self) -> impl Iterator<Item = (&Folder, &RequestSpec)> {
        self.folders
            .iter()
            .flat_map(|f| f.requests.iter().map(move |r| (f, r)))
    }

    pub fn total_requests(&self) -> usize {
        self.folders.iter().map(|f| f.requests.len()).sum()
    }

    pub fn total_assertions(&self) -> usize {
        self.requests().map(|(_, r)| r.assertions.len()).sum()
    }

    pub fn folder_counts(&self) -> Vec<FolderCount> {
        self.folders
            .iter()
            .map(|f| FolderCount {
                folder: f.name.clone(),
                requests: f.requests.len(),
                assertions: f.requests.iter().map(|r| r.assertions.len()).sum(),
            })
            .collect()
    }

    /// Checks methods and that every placeholder and prior is defined by a
    /// collection variable, an extra global, or an earlier capture.
    pub fn validate(&self, globals: &BTreeSet<String>) -> Result<(), CollectionError> {
        let mut defined: BTreeSet<String> = self.variables.keys().cloned().collect();
        defined.extend(globals.iter().cloned());
        for (folder, request) in self.requests() {
            let invalid = |reason: String| CollectionError::Invalid {
                folder: folder.name.clone(),
                request: request.name.clone(),
                reason,
            };
            if !METHODS.contains(&request.method.to_ascii_uppercase().as_str()) {
                return Err(invalid(format!("unsupported method `{}`", request.method)));
            }
            if !request.path.starts_with('/') {
                return Err(invalid(format!(
                    "path `{}` must start with `/`",
                    request.path
                )));
            }
            let mut needed = request.request_variables();
            for a in &request.assertions {
                needed.extend(a.referenced_variables());
            }
            if let Some(missing) = needed.iter().find(|v| !defined.contains(*v)) {
                return Err(invalid(format!(
                    "variable `{missing}` is used before it is defined"
                )));
            }
            for c in &request.captures {
                if c.var.is_empty() || c.path.is_empty() {
                    return Err(invalid("capture needs both `var` and `path`".into()));
                }
                defined.insert(c.var.clone());
            }
        }
        Ok(())
    }
}

/// Parses and statically validates a collection document.
pub fn load_collection(document: &str) -> Result<TestCollection, CollectionError> {
    let collection: TestCollection = serde_json::from_str(document)?;
    collection.validate(&BTreeSet::new())?;
    Ok(collection)
}

pub fn conduit_collection() -> TestCollection {
    load_collection(CONDUIT_COLLECTION).expect("shipped collection is valid")
}

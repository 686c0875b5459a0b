//! Declarative, stateful HTTP test suites.

pub mod collection;
pub mod health;
pub mod runner;
pub mod template;

pub use collection::{
    conduit_collection, load_collection, Assertion, CollectionError, Folder, FolderCount,
    RequestSpec, TestCollection, CONDUIT_COLLECTION,
};
pub use health::{poll_health, poll_until, HealthOutcome, HealthPolicy};
pub use runner::{run_suite, AssertionOutcome, FolderSummary, SuiteResult, SuiteRunner};

//! Task composition, patch parsing, structural verification and scoring.

pub mod diff;
pub mod metrics;
pub mod task;
pub mod verify;

pub use diff::{parse_patch, ParsedDiff};
pub use task::{ConstraintLevel, ConstraintSet, Database, Framework, TaskSpec};
pub use verify::{structural_compliance, LayerAliases};

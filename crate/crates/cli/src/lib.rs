//! Library half of the `structbench` command: report rendering shared by the
//! binary and its tests.

pub mod report;

pub use report::{build_report, report, ReportBundle, ReportError, Table, TableKind};

//! Verification harness: goodness-of-fit statistics, a brute-force oracle and
//! named batteries of checks.

pub mod checks;
pub mod oracle;
pub mod stats;
pub mod suites;

pub use checks::{CheckRecord, Measure};
pub use oracle::{truncated_crm_oracle, OracleRun, PatternLaw};
pub use suites::{run_suite, Suite, TestReport};

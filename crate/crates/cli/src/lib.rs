//! Role entry points and the benchmark harness behind the `streamac` binary.

pub mod bench;
pub mod files;
pub mod report;

pub use report::{BenchReport, Sample};

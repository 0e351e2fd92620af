//! Experiment configuration, benchmark execution, aggregation and reports.

pub mod aggregate;
pub mod bench;
pub mod config;
pub mod report;
pub mod scaling;
pub mod trajectory;

pub use aggregate::{aggregate_dir, AggregateRow, RunKey, TotalsRow};
pub use bench::{run_bench, BenchOutcome, RunSummary};
pub use config::{BenchConfig, RunKnobs};
pub use report::write_summary;
pub use scaling::{scaling_study, ScalingRow};

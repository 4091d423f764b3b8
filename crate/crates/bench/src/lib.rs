//! Deterministic optimizer benchmark harness: TOML run configs in, CSV
//! curves and summaries out.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, OptimizerSpec, ProblemSpec, RunConfig};
pub use output::{emit_csv, read_records, write_records, write_summaries};
pub use run::{build_problem, run_benchmark, BenchmarkOutput, RunRecord, RunSummary};

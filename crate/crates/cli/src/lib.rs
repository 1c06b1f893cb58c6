//! Configuration, orchestration and reporting for `cml-lab`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, ConfigIssue, Experiment, ExperimentConfig};
pub use report::{emit_report, preflight_output_dir, summary_text, ReportFormat};
pub use run::{fingerprint, run_experiment, RunReport, SectionResult, Status};

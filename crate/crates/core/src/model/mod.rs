//! Shared domain types, units and the experiment plan schema.
//!
//! Energy is always joules (watt-seconds) and power always watts; unit
//! conversion happens once, when a sample is built with
//! [`MeasurementSample::normalized`].

mod number;
mod patch;
mod plan;
mod report;
mod time;
mod topology;
mod types;

use std::path::PathBuf;

use thiserror::Error;

pub use number::{fmt_fixed, fmt_sig};
pub use patch::{patch_descriptor, DocFormat, PatchError};
pub use plan::{
    default_infrastructure_prefixes, load_plan, parse_plan, render_plan, ExperimentPlan,
    DEFAULT_COVERAGE_THRESHOLD, DEFAULT_INTER_RUN_SETTLE, DEFAULT_MAX_ATTEMPTS, DEFAULT_SETTLE,
};
pub use report::MetricsReport;
pub use time::Timestamp;
pub use topology::{LifecycleEvent, PodInfo, Topology};
pub use types::{
    DeploymentKind, LayerTag, MeasurementSample, Patch, RequestRecord, ResourceSpec, SampleKind,
    SourceRef, VariantSpec, WorkloadOverride, WorkloadShape, WorkloadSpec, DEFAULT_PAUSING_USERS,
};

/// Bytes per gigabyte as used for memory pricing (binary gigabytes).
pub const BYTES_PER_GB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Parse(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid plan at `{path}`: {rule}")]
    Invariant { path: String, rule: String },
}

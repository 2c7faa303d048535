//! Experimentation harness for comparing the energy efficiency of
//! cloud-native application variants.
//!
//! A plan names a set of deployable variants and a set of workloads. The
//! [`runner`] deploys every variant, drives every workload against it a
//! configurable number of times, and polls [`collectors`] for layered
//! resource and power measurements while the load runs. The [`aggregator`]
//! aligns the raw samples onto a one-second grid and builds an energy
//! ledger, [`metrics`] turns that into per-run sustainability, cost and
//! performance figures, and [`report`] compiles comparison tables, plots and
//! a reproduction manifest.
//!
//! The [`simulator`] is a small deterministic cluster model. It can stand in
//! for a real cluster behind the same driver, collector and load-target
//! interfaces, and it keeps its own ground-truth tally that the rest of the
//! pipeline is checked against.

pub mod aggregator;
pub mod collectors;
pub mod metrics;
pub mod model;
pub mod report;
pub mod runner;
pub mod simulator;
pub mod workloads;

pub use model::{
    ExperimentPlan, LayerTag, MeasurementSample, MetricsReport, RequestRecord, ResourceSpec,
    SampleKind, Timestamp, VariantSpec, WorkloadSpec,
};

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::aggregator::SutSelector;
use crate::collectors::PollContext;
use crate::metrics::FnInvocation;
use crate::model::{ExperimentPlan, Timestamp, Topology, VariantSpec};
use crate::workloads::{DriveResult, Scenario, UserSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error("build failed: {0}")]
    Build(String),
    #[error("deploy failed: {0}")]
    Deploy(String),
    #[error("deployment not ready after {0} s")]
    ReadyTimeout(f64),
    #[error("load failed: {0}")]
    Load(String),
    #[error("topology unavailable: {0}")]
    Topology(String),
    #[error("teardown failed: {0}")]
    Teardown(String),
    #[error("preflight failed: {0}")]
    Preflight(String),
}

/// Names a deployment. Derived from the variant, so a restarted runner can
/// tear down what a crashed one left behind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeployHandle {
    pub release: String,
}

impl DeployHandle {
    pub fn for_variant(variant: &str) -> Self {
        DeployHandle {
            release: format!("wattlab-{variant}").to_ascii_lowercase().replace(['_', '.'], "-"),
        }
    }
}

/// Per-cell information a driver may use.
pub struct CellSetup<'a> {
    pub variant: &'a VariantSpec,
    /// Attempt directory; drivers may write extra artifacts here.
    pub dir: &'a Path,
    pub seed: u64,
}

/// Builds, deploys and tears down variants, and puts load on them.
pub trait DeploymentDriver {
    fn name(&self) -> &'static str;

    /// Virtual drivers run on their own clock; collectors are polled after
    /// the load instead of alongside it.
    fn is_virtual(&self) -> bool;

    /// Checks that the driver itself can work with this plan.
    fn preflight(&mut self, plan: &ExperimentPlan) -> Result<(), DriverError>;

    /// Returns references to the built artifacts.
    fn build(&mut self, variant: &VariantSpec, log: &mut dyn Write) -> Result<Vec<String>, DriverError>;

    fn deploy(
        &mut self,
        descriptor: &Path,
        setup: &CellSetup,
        log: &mut dyn Write,
    ) -> Result<DeployHandle, DriverError>;

    fn wait_ready(&mut self, handle: &DeployHandle, timeout: f64) -> Result<(), DriverError>;

    fn settle(&mut self, handle: &DeployHandle, secs: u64);

    fn drive(
        &mut self,
        handle: &DeployHandle,
        schedule: &UserSchedule,
        scenario: &Scenario,
    ) -> Result<DriveResult, DriverError>;

    /// Current reading of the driver's clock.
    fn clock(&self) -> Timestamp;

    fn poll_context(&self, attempt: u32) -> PollContext;

    fn topology(&mut self, handle: &DeployHandle) -> Result<Topology, DriverError>;

    /// Function invocations billed in `[w0, w1)`.
    fn invocations(&self, window: (i64, i64)) -> Vec<FnInvocation>;

    /// Writes driver-specific artifacts for a finished load.
    fn export(
        &mut self,
        dir: &Path,
        window: (i64, i64),
        plan: &ExperimentPlan,
        selector: &SutSelector,
    ) -> std::io::Result<()>;

    /// Removes the deployment. Calling it again, or for a deployment that
    /// no longer exists, succeeds.
    fn teardown(&mut self, handle: &DeployHandle, log: &mut dyn Write) -> Result<(), DriverError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("no node is free of system-under-test replicas; run the load generator locally instead")]
pub struct NoFreeNode;

/// The first node, by id, that hosts no SUT replica.
pub fn isolate_workload_node(
    topology: &Topology,
    candidates: &[String],
    selector: &SutSelector,
) -> Result<String, NoFreeNode> {
    let mut nodes: Vec<&String> = candidates.iter().collect();
    nodes.sort();
    nodes
        .into_iter()
        .find(|n| {
            !topology
                .pods
                .iter()
                .any(|(id, p)| &p.node == *n && selector.matches(id, &p.service, p.layer))
        })
        .cloned()
        .ok_or(NoFreeNode)
}

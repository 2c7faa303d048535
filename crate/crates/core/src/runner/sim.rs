use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use super::driver::{CellSetup, DeployHandle, DeploymentDriver, DriverError};
use crate::aggregator::SutSelector;
use crate::collectors::{Backend, PollContext};
use crate::metrics::FnInvocation;
use crate::model::{ExperimentPlan, Timestamp, Topology, VariantSpec};
use crate::simulator::{Cluster, SimFeed, SimTopology, SimTrace, SIM_EPOCH};
use crate::workloads::{drive_virtual, DriveResult, Scenario, UserSchedule};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

struct Deployment {
    handle: DeployHandle,
    cluster: Cluster,
    snapshot: Option<Arc<SimTrace>>,
}

/// Runs every deployment on a fresh simulated cluster whose clock starts
/// at [`SIM_EPOCH`]. Descriptors are simulator topologies.
#[derive(Default)]
pub struct SimDriver {
    current: Option<Deployment>,
}

impl SimDriver {
    pub fn new() -> Self {
        Self::default()
    }

    fn deployment(&mut self, handle: &DeployHandle) -> Result<&mut Deployment, DriverError> {
        self.current
            .as_mut()
            .filter(|d| &d.handle == handle)
            .ok_or_else(|| DriverError::Deploy(format!("`{}` is not deployed", handle.release)))
    }

    fn snapshot(&self) -> Option<Arc<SimTrace>> {
        self.current.as_ref().and_then(|d| d.snapshot.clone())
    }
}

impl DeploymentDriver for SimDriver {
    fn name(&self) -> &'static str {
        "sim"
    }

    fn is_virtual(&self) -> bool {
        true
    }

    fn preflight(&mut self, plan: &ExperimentPlan) -> Result<(), DriverError> {
        let feeds = plan
            .collectors
            .iter()
            .filter(|c| c.backend == Backend::Simulator)
            .count();
        if feeds == 0 {
            return Err(DriverError::Preflight(
                "the simulator driver needs at least one collector with backend `simulator`".into(),
            ));
        }
        for v in &plan.variants {
            let path = plan.resolve(&v.deployment_descriptor);
            if !path.is_file() {
                return Err(DriverError::Preflight(format!(
                    "descriptor {} of variant `{}` not found",
                    path.display(),
                    v.name
                )));
            }
        }
        Ok(())
    }

    fn build(&mut self, variant: &VariantSpec, log: &mut dyn Write) -> Result<Vec<String>, DriverError> {
        let _ = writeln!(log, "simulator: nothing to build for `{}`", variant.name);
        Ok(vec![format!("sim:{}", variant.name)])
    }

    fn deploy(
        &mut self,
        descriptor: &Path,
        setup: &CellSetup,
        log: &mut dyn Write,
    ) -> Result<DeployHandle, DriverError> {
        let topo = SimTopology::load(descriptor).map_err(|e| DriverError::Deploy(e.to_string()))?;
        let handle = DeployHandle::for_variant(&setup.variant.name);
        let _ = writeln!(
            log,
            "simulator: {} services on {} nodes, seed {}",
            topo.services.len(),
            topo.nodes.len(),
            setup.seed
        );
        self.current = Some(Deployment {
            handle: handle.clone(),
            cluster: Cluster::new(topo, setup.seed, SIM_EPOCH),
            snapshot: None,
        });
        Ok(handle)
    }

    fn wait_ready(&mut self, handle: &DeployHandle, timeout: f64) -> Result<(), DriverError> {
        let d = self.deployment(handle)?;
        let topo = d.cluster.topology().clone();
        let deadline = d.cluster.now() + timeout.ceil() as i64;
        let ready = |c: &Cluster| {
            topo.services.iter().all(|(name, s)| {
                s.is_function() || c.replica_count(name) >= s.resources.replicas_min as usize
            }) && c
                .trace()
                .replicas
                .iter()
                .filter(|r| r.terminated.is_none())
                .all(|r| r.ready <= c.now())
        };
        while !ready(&d.cluster) {
            if d.cluster.now() >= deadline {
                return Err(DriverError::ReadyTimeout(timeout));
            }
            d.cluster.idle(1);
        }
        Ok(())
    }

    fn settle(&mut self, handle: &DeployHandle, secs: u64) {
        if let Ok(d) = self.deployment(handle) {
            d.cluster.idle(secs);
        }
    }

    fn drive(
        &mut self,
        handle: &DeployHandle,
        schedule: &UserSchedule,
        scenario: &Scenario,
    ) -> Result<DriveResult, DriverError> {
        let d = self.deployment(handle)?;
        let start = d.cluster.now();
        let result = drive_virtual(schedule, &mut d.cluster, scenario, start);
        let end = result.ended.ceil_sec();
        if d.cluster.now() < end {
            d.cluster.idle((end - d.cluster.now()) as u64);
        }
        d.snapshot = Some(Arc::new(d.cluster.trace().clone()));
        Ok(result)
    }

    fn clock(&self) -> Timestamp {
        Timestamp::from_secs(self.current.as_ref().map_or(SIM_EPOCH, |d| d.cluster.now()))
    }

    fn poll_context(&self, attempt: u32) -> PollContext {
        PollContext {
            feed: self
                .snapshot()
                .map(|t| Arc::new(SimFeed::new(t)) as Arc<dyn crate::collectors::SampleFeed>),
            attempt,
            now: Some(self.clock()),
            ..Default::default()
        }
    }

    fn topology(&mut self, handle: &DeployHandle) -> Result<Topology, DriverError> {
        let d = self.deployment(handle).map_err(|e| DriverError::Topology(e.to_string()))?;
        Ok(d.cluster.trace().topology())
    }

    fn invocations(&self, window: (i64, i64)) -> Vec<FnInvocation> {
        self.snapshot()
            .map(|t| t.fn_invocations(window))
            .unwrap_or_default()
    }

    fn export(
        &mut self,
        dir: &Path,
        window: (i64, i64),
        plan: &ExperimentPlan,
        selector: &SutSelector,
    ) -> std::io::Result<()> {
        let Some(trace) = self.snapshot() else {
            return Ok(());
        };
        let gt = trace.ground_truth(window, selector, &plan.over_provision);
        let mut text = serde_json::to_string_pretty(&gt).expect("ground truth serializes");
        text.push('\n');
        std::fs::write(dir.join(GROUND_TRUTH_FILE), text)
    }

    fn teardown(&mut self, handle: &DeployHandle, log: &mut dyn Write) -> Result<(), DriverError> {
        if self.current.as_ref().is_some_and(|d| &d.handle == handle) {
            self.current = None;
            let _ = writeln!(log, "simulator: removed `{}`", handle.release);
        }
        Ok(())
    }
}

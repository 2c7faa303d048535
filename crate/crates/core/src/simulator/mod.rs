//! Deterministic one-second cluster model.
//!
//! Nodes draw `p_idle + (p_max − p_idle) × cpu fraction`. Each replica is
//! booked its limit share of the idle power plus its usage share of the
//! dynamic power; whatever is left on a node is reported as the pseudo
//! replica `system-processes/<node>` on the isolation layer. Requests cost
//! a fixed amount of CPU in every service of their call chain; a replica
//! has `cpu_limit` CPU-milliseconds per second to spend. The only
//! randomness is a ±10 % jitter on service times.

mod cluster;
mod topology;
mod trace;

pub use cluster::{
    Cluster, RequestCounters, StepOutcome, BACKLOG_SECONDS, FUNCTION_IDLE_TIMEOUT, JITTER,
    SYSTEM_NAMESPACE,
};
pub use topology::{AutoscalerSpec, SimNode, SimService, SimTopology};
pub use trace::{
    GroundTruth, InvocationRecord, ReplicaTrace, ScalingEvent, SimFeed, SimTrace, QUERY_CPU,
    QUERY_ENERGY, QUERY_MEM, QUERY_NODE_WATTS, QUERY_WATTS,
};

use crate::workloads::{drive_virtual, DriveResult, Scenario, UserSchedule};

/// Virtual epoch every simulation starts from.
pub const SIM_EPOCH: i64 = 1_700_000_000;

/// Deploys `topology`, lets it settle, drives `schedule` against it and
/// returns the trace together with the client-side view.
pub fn run_sim(
    topology: &SimTopology,
    schedule: &UserSchedule,
    scenario: &Scenario,
    seed: u64,
    settle: u64,
) -> (SimTrace, DriveResult) {
    let mut cluster = Cluster::new(topology.clone(), seed, SIM_EPOCH);
    cluster.idle(settle);
    let start = cluster.now();
    let drive = drive_virtual(schedule, &mut cluster, scenario, start);
    let end = drive.ended.ceil_sec();
    if cluster.now() < end {
        cluster.idle((end - cluster.now()) as u64);
    }
    (cluster.into_trace(), drive)
}

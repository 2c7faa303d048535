//! Runs a plan cell by cell: build, patch, deploy, settle, load, collect,
//! tear down and export, with retries and a durable state journal.
//!
//! Cells are (variant, workload, repetition) triples. They run one at a
//! time, and all repetitions of a (variant, workload) pair run back to
//! back. Every phase transition is written to `state.jsonl` and synced
//! before the phase's work starts, so [`resume`] can pick up after a crash:
//! an interrupted attempt is torn down, marked faulty and retried.

mod driver;
mod execute;
mod external;
mod poller;
mod sim;
mod state;

pub use driver::{
    isolate_workload_node, CellSetup, DeployHandle, DeploymentDriver, DriverError, NoFreeNode,
};
pub use execute::{
    cell_seed, evaluate_attempt, execute_plan, load_run, resume, CellOutcome, Evaluation,
    RunInfo, RunSummary, RunnerError, CUSTOM_FILE, PLAN_SNAPSHOT, RUN_INFO,
};
pub use external::ExternalDriver;
pub use poller::Poller;
pub use sim::{SimDriver, GROUND_TRUTH_FILE};
pub use state::{
    read_transitions, replay, CellHistory, CellId, Phase, RunState, RunStateError, StateError,
    StateMachine, Transition, STATE_FILE,
};

use serde::{Deserialize, Serialize};

/// Set to e.g. `loading@2` to abort the process right after the second
/// transition into the loading phase has been journaled.
pub const CRASH_ENV: &str = "WATTLAB_CRASH_AT";
/// Cluster credentials file, passed to external commands as `KUBECONFIG`.
pub const KUBECONFIG_ENV: &str = "WATTLAB_KUBECONFIG";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    #[default]
    Sim,
    External,
}

/// How variants are deployed and patched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default)]
    pub kind: DriverKind,
    /// Descriptor key paths a variant's resource specs are written to;
    /// `{service}` is replaced by the service name.
    #[serde(default = "default_cpu_path")]
    pub cpu_limit_path: String,
    #[serde(default = "default_mem_path")]
    pub mem_limit_path: String,
    #[serde(default = "default_replicas_min_path")]
    pub replicas_min_path: String,
    #[serde(default = "default_replicas_max_path")]
    pub replicas_max_path: String,
    /// Base URL the load generator targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deploy_command: Option<String>,
    /// Polled until it exits with status 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ready_command: Option<String>,
    /// Prints the deployment's topology as JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teardown_command: Option<String>,
    /// Per-request timeout in seconds.
    #[serde(default = "default_request_timeout")]
    pub request_timeout: f64,
}

fn default_cpu_path() -> String {
    "services.{service}.resources.cpu_limit".into()
}
fn default_mem_path() -> String {
    "services.{service}.resources.mem_limit".into()
}
fn default_replicas_min_path() -> String {
    "services.{service}.resources.replicas_min".into()
}
fn default_replicas_max_path() -> String {
    "services.{service}.resources.replicas_max".into()
}
fn default_request_timeout() -> f64 {
    30.0
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            kind: DriverKind::Sim,
            cpu_limit_path: default_cpu_path(),
            mem_limit_path: default_mem_path(),
            replicas_min_path: default_replicas_min_path(),
            replicas_max_path: default_replicas_max_path(),
            target_url: None,
            build_command: None,
            deploy_command: None,
            ready_command: None,
            topology_command: None,
            teardown_command: None,
            request_timeout: default_request_timeout(),
        }
    }
}

/// Parsed [`CRASH_ENV`] value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrashPoint {
    pub phase: Phase,
    pub nth: u32,
}

impl std::str::FromStr for CrashPoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (phase, nth) = s.split_once('@').unwrap_or((s, "1"));
        Ok(CrashPoint {
            phase: phase.parse()?,
            nth: nth.parse().map_err(|_| format!("bad count in `{s}`"))?,
        })
    }
}

//! The nine run metrics: request consumption (WR), runtime overhead (RO),
//! resource utilization (RU), scaling waste (RE), auxiliary costs (AC),
//! total cost (TC), failure rate (FR), throughput (Rqs) and latency (Lat).
//!
//! Everything here is a pure function of its inputs.

mod cost;
mod energy;
mod requests;
mod usage;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{total_cost, CostBreakdown, FnInvocation};
pub use energy::{auxiliary_costs, request_consumption, runtime_overhead, runtime_overhead_raw};
pub use requests::{failure_rate, latency_quantiles, throughput};
pub use usage::{resource_utilization, scaling_waste};

use crate::aggregator::{EnergyLedger, ResourceTimeline, SutSelector};
use crate::model::{MetricsReport, RequestRecord, ResourceSpec, Timestamp, BYTES_PER_GB};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("WR undefined: no successful requests")]
    WrUndefined,
    #[error("no energy: sut and overhead energy are both zero")]
    NoEnergy,
    #[error("request log is empty")]
    EmptyLog,
    #[error("no resource spec for service `{0}`")]
    MissingSpec(String),
    #[error("cost book has no price for {0}")]
    Unpriced(&'static str),
    #[error("window must have positive length")]
    EmptyWindow,
}

/// Prices per second of provisioned or used capacity. Defaults are public
/// list prices of a container and a function platform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBook {
    /// Per vCPU-second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod_cpu_price: Option<f64>,
    /// Per GB-second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod_mem_price: Option<f64>,
    /// Per invocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_invocation_price: Option<f64>,
    /// Per GB-second of configured memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_gbs_price: Option<f64>,
    #[serde(default = "default_currency")]
    pub currency: String,
}

fn default_currency() -> String {
    "USD".into()
}

impl Default for CostBook {
    fn default() -> Self {
        CostBook {
            pod_cpu_price: Some(0.000011244),
            pod_mem_price: Some(0.0000012347),
            fn_invocation_price: Some(0.0000002),
            fn_gbs_price: Some(0.0000166667),
            currency: default_currency(),
        }
    }
}

impl CostBook {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("pod_cpu_price", self.pod_cpu_price),
            ("pod_mem_price", self.pod_mem_price),
            ("fn_invocation_price", self.fn_invocation_price),
            ("fn_gbs_price", self.fn_gbs_price),
        ] {
            if let Some(p) = p {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(format!("{name} ≥ 0"));
                }
            }
        }
        Ok(())
    }
}

/// Energy not visible to the collectors: cooling, network and storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxModel {
    #[serde(default = "one")]
    pub pue: f64,
    #[serde(default)]
    pub network_j_per_gb: f64,
    #[serde(default)]
    pub storage_j_per_gb_s: f64,
    /// Used to estimate traffic from the request count.
    #[serde(default)]
    pub network_bytes_per_request: f64,
    /// Provisioned storage, held for the whole run window.
    #[serde(default)]
    pub storage_gb: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AuxModel {
    fn default() -> Self {
        AuxModel {
            pue: 1.0,
            network_j_per_gb: 0.0,
            storage_j_per_gb_s: 0.0,
            network_bytes_per_request: 0.0,
            storage_gb: 0.0,
        }
    }
}

impl AuxModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.pue.is_finite() && self.pue >= 1.0) {
            return Err("pue ≥ 1".into());
        }
        let rest = [
            self.network_j_per_gb,
            self.storage_j_per_gb_s,
            self.network_bytes_per_request,
            self.storage_gb,
        ];
        if rest.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("network and storage parameters must be ≥ 0".into());
        }
        Ok(())
    }
}

/// When a replica counts as over-provisioned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverProvisionRule {
    #[serde(default = "default_threshold")]
    pub cpu_threshold: f64,
    #[serde(default = "default_threshold")]
    pub mem_threshold: f64,
    #[serde(default = "yes")]
    pub require_peer_headroom: bool,
}

fn default_threshold() -> f64 {
    0.49
}
fn yes() -> bool {
    true
}

impl Default for OverProvisionRule {
    fn default() -> Self {
        OverProvisionRule {
            cpu_threshold: default_threshold(),
            mem_threshold: default_threshold(),
            require_peer_headroom: true,
        }
    }
}

impl OverProvisionRule {
    pub fn validate(&self) -> Result<(), String> {
        for (name, t) in [
            ("cpu_threshold", self.cpu_threshold),
            ("mem_threshold", self.mem_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("{name} ∈ (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Everything needed to evaluate one run.
pub struct MetricsInput<'a> {
    pub timelines: &'a [ResourceTimeline],
    pub ledger: &'a EnergyLedger,
    pub requests: &'a [RequestRecord],
    pub invocations: &'a [FnInvocation],
    pub selector: &'a SutSelector,
    pub specs: &'a BTreeMap<String, ResourceSpec>,
    pub book: &'a CostBook,
    pub aux: &'a AuxModel,
    pub rule: &'a OverProvisionRule,
    /// Load window; the timelines' grid.
    pub window: (Timestamp, Timestamp),
    /// Seconds at the start of the window excluded from throughput.
    pub ramp_exclusion: u64,
    pub energy_coverage: f64,
    pub removed_outliers: u64,
}

/// Evaluates every metric. Metrics that are undefined for this run are left
/// empty; only configuration problems (missing specs, unpriced kinds) fail.
pub fn compute_report(input: &MetricsInput) -> Result<MetricsReport, MetricsError> {
    let sut: Vec<ResourceTimeline> = input
        .timelines
        .iter()
        .filter(|t| !t.is_node() && input.selector.matches(&t.replica, &t.service, t.layer))
        .cloned()
        .collect();
    let ledger = input.ledger;
    let successful = input.requests.iter().filter(|r| r.success).count() as u64;
    let (t0, t1) = input.window;
    let normal_start = t0.add_secs_f64(input.ramp_exclusion as f64).min(t1);

    let ru = resource_utilization(&sut, input.specs)?;
    let costs = total_cost(&sut, input.invocations, input.book, input.specs)?;
    let window_secs = (t1.millis() - t0.millis()) as f64 / 1000.0;
    let bytes_tx = successful as f64 * input.aux.network_bytes_per_request;
    let storage_gb_s = input.aux.storage_gb * window_secs.max(0.0);
    let lat = latency_quantiles(input.requests, &[0.5, 0.95]).ok();

    let report = MetricsReport {
        wr: request_consumption(ledger, input.requests).ok(),
        ro: runtime_overhead(ledger).ok(),
        overhead_ratio_raw: runtime_overhead_raw(ledger),
        ru,
        re: scaling_waste(&sut, input.rule),
        ac: auxiliary_costs(ledger, input.aux, bytes_tx, storage_gb_s),
        tc: costs.tc,
        consumed_cost: costs.consumed,
        cost_per_kilorequest: costs.per_kilorequest(successful),
        fr: failure_rate(input.requests).ok(),
        rqs: throughput(input.requests, (normal_start, t1)).unwrap_or(0.0),
        lat_p50: lat.as_ref().map(|l| l[0]),
        lat_p95: lat.as_ref().map(|l| l[1]),
        successful_requests: successful,
        total_requests: input.requests.len() as u64,
        total_sut_energy: ledger.sut_joules,
        total_overhead_energy: ledger.overhead_joules,
        energy_coverage: input.energy_coverage,
        removed_outliers: input.removed_outliers,
    };
    Ok(report)
}

pub(crate) fn gb(bytes: f64) -> f64 {
    bytes / BYTES_PER_GB
}

/// Limits of a SUT replica: its own when known, else its service's spec.
pub(crate) fn limits_of<'a>(
    tl: &'a ResourceTimeline,
    specs: &'a BTreeMap<String, ResourceSpec>,
) -> Result<&'a ResourceSpec, MetricsError> {
    tl.limits
        .as_ref()
        .or_else(|| specs.get(&tl.service))
        .ok_or_else(|| MetricsError::MissingSpec(tl.service.clone()))
}

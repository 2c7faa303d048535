//! Measurement sources. Every backend turns its native data into
//! [`MeasurementSample`]s tagged with the querying collector's id and the
//! query's layer; units are normalized on the way in.

mod cluster;
mod inject;
mod journal;
mod meter;
mod trace;
mod tsdb;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{parse_cpu_quantity, parse_mem_quantity, parse_pod_metrics};
pub use inject::{FaultInjection, Injector};
pub use journal::{read_journal, Journal};
pub use meter::parse_meter_reading;
pub use trace::{read_trace, write_trace, TRACE_HEADER};
pub use tsdb::{parse_range_response, tsdb_range_query, RangeResult, TsdbError};

use crate::aggregator::UNATTRIBUTED;
use crate::model::{LayerTag, MeasurementSample, SampleKind, Timestamp, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    TsdbHttp,
    ClusterMetrics,
    PowerMeter,
    TraceReplay,
    Simulator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub query: String,
    pub layer: LayerTag,
    pub kind: SampleKind,
    /// Unit of the returned values; empty means the kind's canonical unit.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub unit: String,
}

/// Label names used to identify replicas and nodes in returned series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelNames {
    #[serde(default = "label_pod")]
    pub pod: String,
    #[serde(default = "label_namespace")]
    pub namespace: String,
    #[serde(default = "label_node")]
    pub node: String,
}

fn label_pod() -> String {
    "pod".into()
}
fn label_namespace() -> String {
    "namespace".into()
}
fn label_node() -> String {
    "node".into()
}

impl Default for LabelNames {
    fn default() -> Self {
        LabelNames {
            pod: label_pod(),
            namespace: label_namespace(),
            node: label_node(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorConfig {
    pub id: String,
    pub backend: Backend,
    /// Base URL, or a file path for trace replay. Unused by the simulator.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub endpoint: String,
    #[serde(default)]
    pub queries: Vec<QuerySpec>,
    /// Seconds between polls.
    #[serde(default = "default_poll_interval")]
    pub poll_interval: u64,
    /// Resolution of range queries in seconds; also the coverage bucket.
    #[serde(default = "default_step")]
    pub step: u64,
    /// Whether poor coverage of this collector marks a run faulty.
    #[serde(default = "yes")]
    pub mandatory: bool,
    /// Node the readings belong to, for sources without node labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default)]
    pub labels: LabelNames,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<FaultInjection>,
}

fn default_poll_interval() -> u64 {
    5
}
fn default_step() -> u64 {
    1
}
fn yes() -> bool {
    true
}

impl CollectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err("id must be non-empty and contain no path separators".into());
        }
        if !(1..=60).contains(&self.poll_interval) {
            return Err("poll_interval ∈ [1, 60]".into());
        }
        if self.step < 1 {
            return Err("step ≥ 1".into());
        }
        let needs_endpoint = !matches!(self.backend, Backend::Simulator);
        if needs_endpoint && self.endpoint.is_empty() {
            return Err("endpoint is required for this backend".into());
        }
        if matches!(self.backend, Backend::TsdbHttp | Backend::Simulator) && self.queries.is_empty()
        {
            return Err("at least one query".into());
        }
        if let Some(i) = &self.inject {
            i.validate()?;
        }
        Ok(())
    }

    /// Kinds this collector is expected to deliver.
    pub fn kinds(&self) -> Vec<SampleKind> {
        let mut k: Vec<SampleKind> = self.queries.iter().map(|q| q.kind).collect();
        if self.backend == Backend::PowerMeter && k.is_empty() {
            k.push(SampleKind::Watts);
        }
        k.sort();
        k.dedup();
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchStatus {
    Ok,
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectorBatch {
    pub collector_id: String,
    pub polled_at: Timestamp,
    pub window: (Timestamp, Timestamp),
    pub status: BatchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub samples: Vec<MeasurementSample>,
}

impl CollectorBatch {
    fn failed(config: &CollectorConfig, window: (Timestamp, Timestamp), polled_at: Timestamp, why: String) -> Self {
        CollectorBatch {
            collector_id: config.id.clone(),
            polled_at,
            window,
            status: BatchStatus::Failed,
            diagnostic: Some(why),
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollectorError {
    #[error("poll window must satisfy t0 < t1 (got {0} .. {1})")]
    EmptyWindow(Timestamp, Timestamp),
}

/// Labeled series as returned by a range query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub labels: BTreeMap<String, String>,
    pub points: Vec<(Timestamp, f64)>,
}

/// In-process source of range-query results, such as the simulator.
pub trait SampleFeed: Send + Sync {
    fn range_query(
        &self,
        query: &str,
        window: (Timestamp, Timestamp),
        step: u64,
    ) -> Result<Vec<RawSeries>, String>;
}

/// What a poll may need besides its configuration.
#[derive(Clone, Default)]
pub struct PollContext {
    pub feed: Option<Arc<dyn SampleFeed>>,
    /// Relative trace paths are resolved against this directory.
    pub base_dir: PathBuf,
    /// Attempt number of the current cell, for fault injection.
    pub attempt: u32,
    /// Clock reading recorded as `polled_at`; wall clock when unset.
    pub now: Option<Timestamp>,
}

/// Fetches everything the collector has for `[t0, t1]`.
///
/// Backend failures never escape as errors; they produce a failed or
/// partial batch with a diagnostic.
pub fn poll(
    config: &CollectorConfig,
    window: (Timestamp, Timestamp),
    ctx: &PollContext,
) -> Result<CollectorBatch, CollectorError> {
    let (t0, t1) = window;
    if t0 >= t1 {
        return Err(CollectorError::EmptyWindow(t0, t1));
    }
    let polled_at = ctx.now.unwrap_or_else(Timestamp::now);
    let fetched = match config.backend {
        Backend::TsdbHttp => poll_series(config, window, |q| {
            tsdb_range_query(&config.endpoint, q, window, config.step).map_err(|e| e.to_string())
        }),
        Backend::Simulator => match &ctx.feed {
            Some(feed) => poll_series(config, window, |q| {
                feed.range_query(q, window, config.step)
                    .map(|series| RangeResult {
                        series,
                        dropped_non_finite: 0,
                    })
            }),
            None => Err("simulator backend needs the simulator driver".to_string()),
        },
        Backend::ClusterMetrics => cluster::poll_cluster(config, window),
        Backend::PowerMeter => meter::poll_meter(config, window),
        Backend::TraceReplay => trace::poll_trace(config, window, &ctx.base_dir),
    };
    let (mut samples, problems) = match fetched {
        Ok(x) => x,
        Err(why) => return Ok(CollectorBatch::failed(config, window, polled_at, why)),
    };
    samples.retain(|s| s.timestamp >= t0 && s.timestamp <= t1);
    if let Some(inj) = &config.inject {
        Injector::new(inj).apply(ctx.attempt, &mut samples);
    }
    let status = if problems.is_empty() {
        BatchStatus::Ok
    } else {
        BatchStatus::Partial
    };
    Ok(CollectorBatch {
        collector_id: config.id.clone(),
        polled_at,
        window,
        status,
        diagnostic: (!problems.is_empty()).then(|| problems.join("; ")),
        samples,
    })
}

type Fetched = Result<(Vec<MeasurementSample>, Vec<String>), String>;

fn poll_series(
    config: &CollectorConfig,
    window: (Timestamp, Timestamp),
    mut fetch: impl FnMut(&str) -> Result<RangeResult, String>,
) -> Fetched {
    let mut samples = Vec::new();
    let mut problems = Vec::new();
    let mut failures = 0;
    for q in &config.queries {
        match fetch(&q.query) {
            Ok(r) => {
                if r.dropped_non_finite > 0 {
                    problems.push(format!(
                        "`{}`: dropped {} non-finite values",
                        q.query, r.dropped_non_finite
                    ));
                }
                let rejected = series_to_samples(config, q, &r.series, window, &mut samples);
                if rejected > 0 {
                    problems.push(format!("`{}`: rejected {rejected} invalid values", q.query));
                }
            }
            Err(e) => {
                failures += 1;
                problems.push(format!("`{}`: {e}", q.query));
            }
        }
    }
    if failures == config.queries.len() && failures > 0 {
        return Err(problems.join("; "));
    }
    Ok((samples, problems))
}

/// Converts labeled series into samples; returns how many values were
/// rejected by unit normalization or sample invariants.
pub fn series_to_samples(
    config: &CollectorConfig,
    q: &QuerySpec,
    series: &[RawSeries],
    (t0, t1): (Timestamp, Timestamp),
    out: &mut Vec<MeasurementSample>,
) -> usize {
    let mut rejected = 0;
    for s in series {
        let pod = s.labels.get(&config.labels.pod).map(|p| {
            match s.labels.get(&config.labels.namespace) {
                Some(ns) if !ns.is_empty() => format!("{ns}/{p}"),
                _ => p.clone(),
            }
        });
        let node = s
            .labels
            .get(&config.labels.node)
            .cloned()
            .or_else(|| config.node.clone())
            .unwrap_or_default();
        for (t, v) in &s.points {
            if *t < t0 || *t > t1 {
                continue;
            }
            match MeasurementSample::normalized(*t, q.layer, &config.id, &node, pod.clone(), q.kind, *v, &q.unit) {
                Ok(sample) => out.push(sample),
                Err(_) => rejected += 1,
            }
        }
    }
    rejected
}

/// Attribution counts from [`enrich`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnrichStats {
    pub attributed: usize,
    pub unattributed: usize,
}

/// Attaches node, service and layer from the topology to every pod sample.
/// Pods the topology does not know get the service `unattributed`.
pub fn enrich(samples: &mut [MeasurementSample], topology: &Topology) -> EnrichStats {
    let mut stats = EnrichStats::default();
    for s in samples.iter_mut() {
        let Some(pod) = &s.pod else { continue };
        match topology.get(pod) {
            Some(info) => {
                s.node = info.node.clone();
                s.service = Some(info.service.clone());
                s.layer = info.layer;
                stats.attributed += 1;
            }
            None => {
                s.service = Some(UNATTRIBUTED.to_string());
                stats.unattributed += 1;
            }
        }
    }
    stats
}

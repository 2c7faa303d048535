use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregator::{Grid, ResourceTimeline, SutSelector};
use crate::collectors::{RawSeries, SampleFeed};
use crate::metrics::{FnInvocation, OverProvisionRule};
use crate::model::{
    DeploymentKind, LayerTag, LifecycleEvent, PodInfo, ResourceSpec, Timestamp, Topology,
};

/// Per-second history of one replica, indexed from its creation second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaTrace {
    pub id: String,
    pub service: String,
    pub namespace: String,
    pub pod: String,
    pub node: String,
    pub layer: LayerTag,
    pub kind: DeploymentKind,
    pub limits: Option<ResourceSpec>,
    pub created: i64,
    pub ready: i64,
    pub terminated: Option<i64>,
    pub cpu: Vec<f64>,
    pub mem: Vec<f64>,
    pub watts: Vec<f64>,
}

impl ReplicaTrace {
    fn index(&self, s: i64) -> Option<usize> {
        let i = s - self.created;
        (i >= 0 && (i as usize) < self.watts.len()).then_some(i as usize)
    }

    pub fn cpu_at(&self, s: i64) -> Option<f64> {
        self.index(s).map(|i| self.cpu[i])
    }

    pub fn mem_at(&self, s: i64) -> Option<f64> {
        self.index(s).map(|i| self.mem[i])
    }

    pub fn watts_at(&self, s: i64) -> Option<f64> {
        self.index(s).map(|i| self.watts[i])
    }

    /// Joules consumed in `[created, s)`.
    pub fn energy_before(&self, s: i64) -> f64 {
        let n = (s - self.created).clamp(0, self.watts.len() as i64) as usize;
        self.watts[..n].iter().sum()
    }

    pub fn is_system(&self) -> bool {
        self.limits.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingEvent {
    pub at: i64,
    pub service: String,
    pub from: u32,
    pub to: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub at: f64,
    pub service: String,
    pub duration: f64,
    pub mem_bytes: u64,
}

impl InvocationRecord {
    pub fn to_invocation(&self) -> FnInvocation {
        FnInvocation {
            service: self.service.clone(),
            duration: self.duration,
            mem_bytes: self.mem_bytes,
        }
    }
}

/// Everything the simulator did, second by second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    /// First simulated second.
    pub start: i64,
    /// One past the last simulated second.
    pub end: i64,
    pub replicas: Vec<ReplicaTrace>,
    pub node_watts: BTreeMap<String, Vec<f64>>,
    /// Successful requests by arrival second, from `start`.
    pub served: Vec<u64>,
    /// Failed requests by arrival second, from `start`.
    pub failed: Vec<u64>,
    pub scaling_events: Vec<ScalingEvent>,
    pub invocations: Vec<InvocationRecord>,
}

/// Reference values computed straight from the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub window: (i64, i64),
    pub sut_joules: f64,
    pub overhead_joules: f64,
    pub waste_joules: f64,
    pub node_joules: f64,
    pub ru: Option<f64>,
    pub served: u64,
    pub failed: u64,
    pub wr: Option<f64>,
    pub ro: Option<f64>,
}

impl SimTrace {
    pub(crate) fn new(start: i64, nodes: Vec<String>) -> Self {
        SimTrace {
            start,
            end: start,
            replicas: Vec::new(),
            node_watts: nodes.into_iter().map(|n| (n, Vec::new())).collect(),
            served: Vec::new(),
            failed: Vec::new(),
            scaling_events: Vec::new(),
            invocations: Vec::new(),
        }
    }

    pub(crate) fn push_node_watts(&mut self, watts: &[f64]) {
        for (series, w) in self.node_watts.values_mut().zip(watts) {
            series.push(*w);
        }
    }

    /// Simulated seconds.
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    /// Replica placement and lifecycle as the cluster would report it.
    pub fn topology(&self) -> Topology {
        let mut t = Topology {
            pods: BTreeMap::new(),
            nodes: self.node_watts.keys().cloned().collect(),
        };
        for r in &self.replicas {
            let mut lifecycle = vec![
                (LifecycleEvent::Created, Timestamp::from_secs(r.created)),
                (LifecycleEvent::Ready, Timestamp::from_secs(r.ready)),
            ];
            if let Some(x) = r.terminated {
                lifecycle.push((LifecycleEvent::Terminated, Timestamp::from_secs(x)));
            }
            t.pods.insert(
                r.id.clone(),
                PodInfo {
                    node: r.node.clone(),
                    service: r.service.clone(),
                    layer: r.layer,
                    kind: r.kind,
                    limits: r.limits.clone(),
                    lifecycle,
                },
            );
        }
        t
    }

    pub fn fn_invocations(&self, window: (i64, i64)) -> Vec<FnInvocation> {
        self.invocations
            .iter()
            .filter(|i| i.at >= window.0 as f64 && i.at < window.1 as f64)
            .map(InvocationRecord::to_invocation)
            .collect()
    }

    /// Exact timelines on `grid`, including one `node/<id>` timeline per
    /// node. This is the simulator's export in the aggregator's schema.
    pub fn timelines(&self, grid: Grid) -> Vec<ResourceTimeline> {
        let topo = self.topology();
        let mut out = Vec::new();
        for r in &self.replicas {
            let mut tl = ResourceTimeline::empty(r.id.clone(), grid);
            tl.service = r.service.clone();
            tl.node = r.node.clone();
            tl.layer = r.layer;
            tl.kind = r.kind;
            tl.limits = r.limits.clone();
            tl.lifecycle = topo.pods[&r.id].lifecycle.clone();
            for (i, s) in grid.seconds().enumerate() {
                if let Some(w) = r.watts_at(s) {
                    tl.live[i] = true;
                    tl.watts[i] = Some(w);
                    if !r.is_system() {
                        tl.cpu_millicores[i] = r.cpu_at(s);
                        tl.mem_bytes[i] = r.mem_at(s);
                    }
                }
            }
            out.push(tl);
        }
        for (node, w) in &self.node_watts {
            let mut tl = ResourceTimeline::empty(format!("node/{node}"), grid);
            tl.node = node.clone();
            tl.layer = LayerTag::Physical;
            for (i, s) in grid.seconds().enumerate() {
                let k = s - self.start;
                if k >= 0 && (k as usize) < w.len() {
                    tl.live[i] = true;
                    tl.watts[i] = Some(w[k as usize]);
                }
            }
            out.push(tl);
        }
        out.sort_by(|a, b| a.replica.cmp(&b.replica));
        out
    }

    /// Ground truth over seconds `[w0, w1)`, by a direct scan of the raw
    /// per-second records.
    pub fn ground_truth(
        &self,
        (w0, w1): (i64, i64),
        selector: &SutSelector,
        rule: &OverProvisionRule,
    ) -> GroundTruth {
        let is_sut = |r: &ReplicaTrace| selector.matches(&r.id, &r.service, r.layer);
        let mut sut = 0.0;
        let mut overhead = 0.0;
        let mut node = 0.0;
        let mut waste = 0.0;
        let mut ru_sum = 0.0;
        let mut ru_n = 0usize;
        for s in w0..w1 {
            let k = s - self.start;
            if k >= 0 {
                for w in self.node_watts.values() {
                    node += w.get(k as usize).copied().unwrap_or(0.0);
                }
            }
            let (mut cu, mut cl, mut mu, mut ml) = (0.0, 0.0, 0.0, 0.0);
            for r in &self.replicas {
                let Some(w) = r.watts_at(s) else { continue };
                if is_sut(r) {
                    sut += w;
                    let l = r.limits.as_ref().expect("sut replicas have limits");
                    let (c, m) = (r.cpu[(s - r.created) as usize], r.mem[(s - r.created) as usize]);
                    cu += c;
                    cl += l.cpu_limit;
                    mu += m;
                    ml += l.mem_limit as f64;
                    if self.wasteful(r, s, c, m, rule, &is_sut) {
                        waste += w;
                    }
                } else if r.layer.is_overhead() {
                    overhead += w;
                }
            }
            if cl > 0.0 {
                ru_sum += (cu / cl + mu / ml) / 2.0;
                ru_n += 1;
            }
        }
        let count = |v: &[u64]| -> u64 {
            (w0..w1)
                .filter_map(|s| v.get((s - self.start).max(0) as usize).filter(|_| s >= self.start))
                .sum()
        };
        let served = count(&self.served);
        let failed = count(&self.failed);
        GroundTruth {
            window: (w0, w1),
            sut_joules: sut,
            overhead_joules: overhead,
            waste_joules: waste,
            node_joules: node,
            ru: (ru_n > 0).then(|| ru_sum / ru_n as f64),
            served,
            failed,
            wr: (served > 0).then(|| sut / served as f64),
            ro: (sut + overhead > 0.0).then(|| overhead / (sut + overhead)),
        }
    }

    fn wasteful(
        &self,
        r: &ReplicaTrace,
        s: i64,
        cpu: f64,
        mem: f64,
        rule: &OverProvisionRule,
        is_sut: &dyn Fn(&ReplicaTrace) -> bool,
    ) -> bool {
        let l = r.limits.as_ref().expect("limits");
        if !(cpu / l.cpu_limit < rule.cpu_threshold && mem / (l.mem_limit as f64) < rule.mem_threshold) {
            return false;
        }
        if !rule.require_peer_headroom {
            return true;
        }
        self.replicas.iter().any(|p| {
            if p.id == r.id || p.service != r.service || !is_sut(p) {
                return false;
            }
            match (p.limits.as_ref(), p.cpu_at(s), p.mem_at(s)) {
                (Some(pl), Some(pc), Some(pm)) => {
                    pl.cpu_limit - pc >= cpu && pl.mem_limit as f64 - pm >= mem
                }
                _ => false,
            }
        })
    }
}

pub const QUERY_CPU: &str = "replica_cpu";
pub const QUERY_MEM: &str = "replica_mem";
pub const QUERY_WATTS: &str = "replica_watts";
pub const QUERY_ENERGY: &str = "replica_energy";
pub const QUERY_NODE_WATTS: &str = "node_watts";

/// Serves range queries over a finished trace, like a time-series
/// database scraping the simulated cluster every second.
///
/// Queries: `replica_cpu` (millicores), `replica_mem` (bytes),
/// `replica_watts` (W), `replica_energy` (cumulative J) and `node_watts`.
#[derive(Clone)]
pub struct SimFeed {
    trace: Arc<SimTrace>,
}

impl SimFeed {
    pub fn new(trace: Arc<SimTrace>) -> Self {
        SimFeed { trace }
    }
}

impl SampleFeed for SimFeed {
    fn range_query(
        &self,
        query: &str,
        (t0, t1): (Timestamp, Timestamp),
        step: u64,
    ) -> Result<Vec<RawSeries>, String> {
        let t = &self.trace;
        let step = step.max(1) as usize;
        let seconds: Vec<i64> = (t0.ceil_sec()..=t1.floor_sec()).step_by(step).collect();
        let labels = |r: &ReplicaTrace| {
            BTreeMap::from([
                ("namespace".to_string(), r.namespace.clone()),
                ("pod".to_string(), r.pod.clone()),
                ("node".to_string(), r.node.clone()),
            ])
        };
        let mut out = Vec::new();
        match query {
            QUERY_CPU | QUERY_MEM | QUERY_WATTS => {
                for r in &t.replicas {
                    if r.is_system() && query != QUERY_WATTS {
                        continue;
                    }
                    let points = seconds
                        .iter()
                        .filter_map(|&s| {
                            let v = match query {
                                QUERY_CPU => r.cpu_at(s),
                                QUERY_MEM => r.mem_at(s),
                                _ => r.watts_at(s),
                            };
                            v.map(|v| (Timestamp::from_secs(s), v))
                        })
                        .collect::<Vec<_>>();
                    if !points.is_empty() {
                        out.push(RawSeries { labels: labels(r), points });
                    }
                }
            }
            QUERY_ENERGY => {
                for r in &t.replicas {
                    let last = r.created + r.watts.len() as i64;
                    let points = seconds
                        .iter()
                        .filter(|&&s| s >= r.created && s <= last)
                        .map(|&s| (Timestamp::from_secs(s), r.energy_before(s)))
                        .collect::<Vec<_>>();
                    if !points.is_empty() {
                        out.push(RawSeries { labels: labels(r), points });
                    }
                }
            }
            QUERY_NODE_WATTS => {
                for (node, w) in &t.node_watts {
                    let points = seconds
                        .iter()
                        .filter_map(|&s| {
                            let k = s - t.start;
                            (k >= 0).then(|| w.get(k as usize)).flatten().map(|v| (Timestamp::from_secs(s), *v))
                        })
                        .collect::<Vec<_>>();
                    if !points.is_empty() {
                        out.push(RawSeries {
                            labels: BTreeMap::from([("node".to_string(), node.clone())]),
                            points,
                        });
                    }
                }
            }
            other => return Err(format!("unknown simulator query `{other}`")),
        }
        Ok(out)
    }
}

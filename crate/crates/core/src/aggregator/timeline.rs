use std::collections::BTreeMap;

use crate::model::{
    DeploymentKind, LayerTag, LifecycleEvent, MeasurementSample, ResourceSpec, SampleKind,
    Timestamp, Topology,
};

use super::clean::{clean, CleaningConfig};
use super::resample::{fill_gaps_seeded, resample_raw_seeded, Grid};

pub const UNATTRIBUTED: &str = "unattributed";

/// Per-replica usage, limits and power on a one-second grid.
///
/// Node-level power appears as a timeline whose replica is `node/<id>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceTimeline {
    pub replica: String,
    pub service: String,
    pub node: String,
    pub layer: LayerTag,
    pub kind: DeploymentKind,
    pub grid_start: i64,
    pub cpu_millicores: Vec<Option<f64>>,
    pub mem_bytes: Vec<Option<f64>>,
    pub watts: Vec<Option<f64>>,
    /// Whether the replica was provisioned in each second.
    pub live: Vec<bool>,
    pub limits: Option<ResourceSpec>,
    pub lifecycle: Vec<(LifecycleEvent, Timestamp)>,
}

impl ResourceTimeline {
    pub fn empty(replica: impl Into<String>, grid: Grid) -> Self {
        let n = grid.len();
        ResourceTimeline {
            replica: replica.into(),
            service: String::new(),
            node: String::new(),
            layer: LayerTag::Service,
            kind: DeploymentKind::Pod,
            grid_start: grid.start,
            cpu_millicores: vec![None; n],
            mem_bytes: vec![None; n],
            watts: vec![None; n],
            live: vec![false; n],
            limits: None,
            lifecycle: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.watts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.watts.is_empty()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid_start, self.grid_start + self.len() as i64)
    }

    pub fn is_node(&self) -> bool {
        self.replica.starts_with("node/")
    }

    /// Joules over the grid; missing seconds count as zero.
    pub fn joules(&self) -> f64 {
        self.watts.iter().flatten().sum()
    }

    pub fn has_energy(&self) -> bool {
        self.watts.iter().any(Option::is_some)
    }
}

/// Outcome details of timeline assembly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssemblyStats {
    pub removed_outliers: usize,
    /// Samples whose pod was not in the topology.
    pub unattributed_samples: usize,
}

type SeriesKey = (String, SampleKind);

/// Groups enriched samples per (replica, kind), resamples, cleans energy
/// series, fills short gaps and assembles one timeline per replica.
pub fn assemble_timelines(
    samples: &[MeasurementSample],
    topology: &Topology,
    grid: Grid,
    cleaning: &CleaningConfig,
) -> (Vec<ResourceTimeline>, AssemblyStats) {
    let mut stats = AssemblyStats::default();
    let mut readings: BTreeMap<SeriesKey, Vec<(Timestamp, f64)>> = BTreeMap::new();
    let mut meta: BTreeMap<String, (String, String, LayerTag)> = BTreeMap::new();
    for s in samples {
        let owner = s.series_owner();
        let kind = match s.kind {
            SampleKind::CpuMillicores
            | SampleKind::CpuFraction
            | SampleKind::MemBytes
            | SampleKind::Watts
            | SampleKind::EnergyJoules => s.kind,
            _ => continue,
        };
        if s.service.as_deref() == Some(UNATTRIBUTED) {
            stats.unattributed_samples += 1;
        }
        readings
            .entry((owner.clone(), kind))
            .or_default()
            .push((s.timestamp, s.value));
        meta.entry(owner).or_insert_with(|| {
            (
                s.service.clone().unwrap_or_default(),
                s.node.clone(),
                s.layer,
            )
        });
    }

    let mut timelines: BTreeMap<String, ResourceTimeline> = BTreeMap::new();
    for ((owner, kind), rs) in &readings {
        let (raw, seed) = resample_raw_seeded(*kind, rs, grid);
        let raw = if kind.is_energy() {
            let (cleaned, removed) = clean(&raw, cleaning);
            stats.removed_outliers += removed;
            cleaned
        } else {
            raw
        };
        let filled = fill_gaps_seeded(&raw, seed, cleaning.max_gap_fill);
        let tl = timelines.entry(owner.clone()).or_insert_with(|| {
            let mut tl = ResourceTimeline::empty(owner.clone(), grid);
            let (service, node, layer) = meta[owner].clone();
            tl.service = service;
            tl.node = node;
            tl.layer = layer;
            if let Some(info) = topology.get(owner) {
                tl.service = info.service.clone();
                tl.node = info.node.clone();
                tl.layer = info.layer;
                tl.kind = info.kind;
                tl.limits = info.limits.clone();
                tl.lifecycle = info.lifecycle.clone();
            }
            if tl.is_node() {
                tl.service.clear();
            }
            tl
        });
        let values = filled.values();
        match kind {
            SampleKind::CpuMillicores => merge(&mut tl.cpu_millicores, &values),
            SampleKind::CpuFraction => {
                if let Some(limit) = tl.limits.as_ref().map(|l| l.cpu_limit) {
                    let mc: Vec<Option<f64>> =
                        values.iter().map(|v| v.map(|f| f * limit)).collect();
                    merge(&mut tl.cpu_millicores, &mc);
                }
            }
            SampleKind::MemBytes => merge(&mut tl.mem_bytes, &values),
            SampleKind::Watts | SampleKind::EnergyJoules => merge(&mut tl.watts, &values),
            _ => {}
        }
    }

    for tl in timelines.values_mut() {
        let info = topology.get(&tl.replica);
        for (i, sec) in grid.seconds().enumerate() {
            tl.live[i] = match info.and_then(|p| p.live_at(sec)) {
                Some(live) => live,
                None => {
                    tl.cpu_millicores[i].is_some()
                        || tl.mem_bytes[i].is_some()
                        || tl.watts[i].is_some()
                }
            };
            if !tl.live[i] {
                // no carried-forward readings outside the replica's lifetime
                tl.cpu_millicores[i] = None;
                tl.mem_bytes[i] = None;
                tl.watts[i] = None;
            }
        }
    }
    (timelines.into_values().collect(), stats)
}

fn merge(dst: &mut [Option<f64>], src: &[Option<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        if s.is_some() {
            *d = *s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::clean::CleaningConfig;
    use crate::model::PodInfo;

    fn sample(t: i64, pod: Option<&str>, kind: SampleKind, v: f64) -> MeasurementSample {
        MeasurementSample {
            timestamp: Timestamp::from_secs(t),
            layer: if pod.is_some() {
                LayerTag::Service
            } else {
                LayerTag::Physical
            },
            source: "test".into(),
            node: "n1".into(),
            pod: pod.map(String::from),
            service: pod.map(|_| "web".to_string()),
            kind,
            value: v,
            unit: kind.canonical_unit().into(),
        }
    }

    #[test]
    fn builds_replica_and_node_timelines() {
        let mut samples = Vec::new();
        for t in 0..5 {
            samples.push(sample(t, Some("web-1"), SampleKind::Watts, 5.0));
            samples.push(sample(t, Some("web-1"), SampleKind::CpuMillicores, 100.0));
            samples.push(sample(t, None, SampleKind::Watts, 50.0));
        }
        let (tls, stats) = assemble_timelines(
            &samples,
            &Topology::default(),
            Grid::new(0, 5),
            &CleaningConfig::default(),
        );
        assert_eq!(stats.removed_outliers, 0);
        assert_eq!(tls.len(), 2);
        let node = tls.iter().find(|t| t.is_node()).unwrap();
        assert_eq!(node.replica, "node/n1");
        assert_eq!(node.joules(), 250.0);
        let web = tls.iter().find(|t| t.replica == "web-1").unwrap();
        assert_eq!(web.joules(), 25.0);
        assert!(web.live.iter().all(|l| *l));
        assert!(web.mem_bytes.iter().all(Option::is_none));
    }

    #[test]
    fn cpu_fraction_uses_limits_and_lifecycle_sets_liveness() {
        let mut topo = Topology::default();
        topo.pods.insert(
            "web-1".into(),
            PodInfo {
                node: "n1".into(),
                service: "web".into(),
                layer: LayerTag::Service,
                kind: DeploymentKind::Pod,
                limits: Some(ResourceSpec::new(2000.0, 1 << 30)),
                lifecycle: vec![
                    (LifecycleEvent::Created, Timestamp::from_secs(1)),
                    (LifecycleEvent::Terminated, Timestamp::from_secs(3)),
                ],
            },
        );
        let samples: Vec<_> = (1..3)
            .map(|t| sample(t, Some("web-1"), SampleKind::CpuFraction, 0.25))
            .collect();
        let (tls, _) =
            assemble_timelines(&samples, &topo, Grid::new(0, 5), &CleaningConfig::default());
        assert_eq!(tls[0].live, vec![false, true, true, false, false]);
        assert_eq!(tls[0].cpu_millicores[1], Some(500.0));
    }
}

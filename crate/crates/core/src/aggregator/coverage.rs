use std::collections::{BTreeMap, BTreeSet};

use super::resample::Grid;
use crate::model::{MeasurementSample, SampleKind, Topology};

/// Observed versus expected sample slots, per kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoverageReport {
    pub per_kind: BTreeMap<SampleKind, (u64, u64)>,
}

impl CoverageReport {
    /// Worst kind; 1.0 when nothing was expected.
    pub fn fraction(&self) -> f64 {
        self.per_kind
            .values()
            .map(|(o, e)| if *e == 0 { 1.0 } else { *o as f64 / *e as f64 })
            .fold(1.0, f64::min)
    }

    /// Pooled fraction over the kinds accepted by `filter`.
    pub fn pooled(&self, filter: impl Fn(SampleKind) -> bool) -> f64 {
        let (o, e) = self
            .per_kind
            .iter()
            .filter(|(k, _)| filter(**k))
            .fold((0, 0), |(o, e), (_, (a, b))| (o + a, e + b));
        if e == 0 {
            1.0
        } else {
            o as f64 / e as f64
        }
    }
}

/// Coverage of one collector's samples over `grid`, counted in buckets of
/// `bucket` seconds.
///
/// Every owner (replica or node) that reported a kind is expected to report
/// it in each bucket it was live: per its lifecycle when the topology knows
/// it, the whole grid for nodes, and otherwise between its first and last
/// reading. A kind listed in `expected_kinds` with no readings at all
/// counts as fully missing.
pub fn coverage(
    samples: &[MeasurementSample],
    expected_kinds: &[SampleKind],
    topology: &Topology,
    grid: Grid,
    bucket: u64,
) -> CoverageReport {
    let bucket = bucket.max(1) as i64;
    let n_buckets = (grid.len() as i64 + bucket - 1) / bucket;
    let mut seen: BTreeMap<(SampleKind, String), BTreeSet<i64>> = BTreeMap::new();
    for s in samples {
        let sec = s.timestamp.floor_sec();
        if grid.index_of(sec).is_none() {
            continue;
        }
        seen.entry((s.kind, s.series_owner()))
            .or_default()
            .insert((sec - grid.start) / bucket);
    }
    let mut report = CoverageReport::default();
    for k in expected_kinds {
        report.per_kind.insert(*k, (0, n_buckets as u64));
    }
    let mut kinds_seen = BTreeSet::new();
    for ((kind, owner), buckets) in &seen {
        let expected = match topology.get(owner).filter(|p| p.created().is_some()) {
            Some(info) => (0..n_buckets)
                .filter(|b| {
                    let lo = grid.start + b * bucket;
                    let hi = (lo + bucket).min(grid.end);
                    (lo..hi).any(|s| info.live_at(s) == Some(true))
                })
                .count() as u64,
            None if owner.starts_with("node/") => n_buckets as u64,
            None => {
                let first = *buckets.iter().next().unwrap_or(&0);
                let last = *buckets.iter().next_back().unwrap_or(&0);
                (last - first + 1) as u64
            }
        };
        let entry = report.per_kind.entry(*kind).or_insert((0, 0));
        if kinds_seen.insert(*kind) {
            *entry = (0, 0);
        }
        entry.0 += (buckets.len() as u64).min(expected);
        entry.1 += expected;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeploymentKind, LayerTag, LifecycleEvent, PodInfo, Timestamp};

    fn s(t: i64, pod: &str, kind: SampleKind) -> MeasurementSample {
        MeasurementSample {
            timestamp: Timestamp::from_secs(t),
            layer: LayerTag::Service,
            source: "c".into(),
            node: "n1".into(),
            pod: Some(pod.into()),
            service: None,
            kind,
            value: 1.0,
            unit: String::new(),
        }
    }

    #[test]
    fn dropped_readings_reduce_coverage() {
        let samples: Vec<_> = (0..100)
            .filter(|t| t % 10 != 0)
            .map(|t| s(t, "p", SampleKind::Watts))
            .chain((0..100).map(|t| s(t, "p", SampleKind::CpuMillicores)))
            .collect();
        let mut topo = Topology::default();
        topo.pods.insert(
            "p".into(),
            PodInfo {
                node: "n1".into(),
                service: "web".into(),
                layer: LayerTag::Service,
                kind: DeploymentKind::Pod,
                limits: None,
                lifecycle: vec![(LifecycleEvent::Created, Timestamp::from_secs(0))],
            },
        );
        let r = coverage(
            &samples,
            &[SampleKind::Watts, SampleKind::CpuMillicores],
            &topo,
            Grid::new(0, 100),
            1,
        );
        assert_eq!(r.per_kind[&SampleKind::Watts], (90, 100));
        assert_eq!(r.fraction(), 0.9);
        assert_eq!(r.pooled(SampleKind::is_energy), 0.9);
    }

    #[test]
    fn silent_kind_counts_as_zero() {
        let samples: Vec<_> = (0..10).map(|t| s(t, "p", SampleKind::Watts)).collect();
        let r = coverage(
            &samples,
            &[SampleKind::Watts, SampleKind::MemBytes],
            &Topology::default(),
            Grid::new(0, 10),
            1,
        );
        assert_eq!(r.per_kind[&SampleKind::MemBytes], (0, 10));
        assert_eq!(r.fraction(), 0.0);
    }

    #[test]
    fn buckets_follow_step() {
        let samples: Vec<_> = (0..60).step_by(5).map(|t| s(t, "p", SampleKind::Watts)).collect();
        let r = coverage(&samples, &[], &Topology::default(), Grid::new(0, 60), 5);
        assert_eq!(r.per_kind[&SampleKind::Watts], (12, 12));
    }
}

use std::collections::BTreeMap;

use thiserror::Error;

use super::timeline::ResourceTimeline;
use super::SutSelector;
use crate::model::LayerTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggError {
    #[error("no energy source: no timeline carries power readings")]
    NoEnergySource,
}

/// Run-level energy split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub per_layer: BTreeMap<LayerTag, f64>,
    pub sut_joules: f64,
    /// Platform, isolation and infrastructure replicas outside the SUT.
    pub overhead_joules: f64,
    /// Application-layer replicas that are neither SUT nor infrastructure,
    /// such as a co-located load generator.
    pub excluded_joules: f64,
    pub node_joules: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EnergyLedger {
    pub fn total_attributed(&self) -> f64 {
        self.sut_joules + self.overhead_joules
    }

    pub fn host_joules(&self) -> Option<f64> {
        (!self.node_joules.is_empty()).then(|| self.node_joules.values().sum())
    }

    /// Sums two ledgers over disjoint timeline sets.
    pub fn merge(&mut self, other: &EnergyLedger) {
        for (l, j) in &other.per_layer {
            *self.per_layer.entry(*l).or_default() += j;
        }
        self.sut_joules += other.sut_joules;
        self.overhead_joules += other.overhead_joules;
        self.excluded_joules += other.excluded_joules;
        for (n, j) in &other.node_joules {
            *self.node_joules.entry(n.clone()).or_default() += j;
        }
        self.warnings.extend(other.warnings.iter().cloned());
    }
}

/// Books each timeline's joules as SUT, overhead, excluded or host energy.
pub fn attribute_energy(
    timelines: &[ResourceTimeline],
    selector: &SutSelector,
) -> Result<EnergyLedger, AggError> {
    if !timelines.iter().any(ResourceTimeline::has_energy) {
        return Err(AggError::NoEnergySource);
    }
    let mut ledger = EnergyLedger::default();
    let mut sut_nodes = BTreeMap::new();
    let mut excluded = Vec::new();
    for tl in timelines {
        let j = tl.joules();
        *ledger.per_layer.entry(tl.layer).or_default() += j;
        if tl.is_node() {
            *ledger.node_joules.entry(tl.node.clone()).or_default() += j;
        } else if selector.matches(&tl.replica, &tl.service, tl.layer) {
            ledger.sut_joules += j;
            sut_nodes.insert(tl.node.clone(), ());
        } else if tl.layer.is_overhead() || selector.is_infrastructure(&tl.replica, &tl.service) {
            ledger.overhead_joules += j;
        } else {
            ledger.excluded_joules += j;
            excluded.push(tl);
        }
    }
    if !timelines
        .iter()
        .any(|t| !t.is_node() && selector.matches(&t.replica, &t.service, t.layer))
    {
        ledger
            .warnings
            .push("SUT selector matched no replica; sut energy is 0".into());
    }
    for tl in excluded {
        if sut_nodes.contains_key(&tl.node) && tl.has_energy() {
            ledger.warnings.push(format!(
                "replica {} shares node {} with the SUT and is excluded from attribution",
                tl.replica, tl.node
            ));
        }
    }
    if let Some(host) = ledger.host_joules() {
        let tol = 1e-6 * host.max(1.0);
        if ledger.total_attributed() > host + tol {
            ledger.warnings.push(format!(
                "attributed energy {:.3} J exceeds host energy {:.3} J",
                ledger.total_attributed(),
                host
            ));
        }
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::resample::Grid;
    use crate::model::default_infrastructure_prefixes;
    use proptest::prelude::*;

    fn tl(replica: &str, service: &str, layer: LayerTag, watts: f64, secs: i64) -> ResourceTimeline {
        let mut t = ResourceTimeline::empty(replica, Grid::new(0, secs));
        t.service = service.into();
        t.node = "n1".into();
        t.layer = layer;
        t.watts = vec![Some(watts); secs as usize];
        t.live = vec![true; secs as usize];
        t
    }

    fn selector() -> SutSelector {
        SutSelector::new(vec![], default_infrastructure_prefixes())
    }

    #[test]
    fn sut_and_platform_split() {
        let tls = vec![
            tl("shop/web-0", "web", LayerTag::Service, 5.0, 100),
            tl("shop/web-1", "web", LayerTag::Service, 5.0, 100),
            tl("kube-system/dns-0", "dns", LayerTag::Platform, 3.0, 100),
        ];
        let l = attribute_energy(&tls, &selector()).unwrap();
        assert_eq!(l.sut_joules, 1000.0);
        assert_eq!(l.overhead_joules, 300.0);
        assert!(l.warnings.is_empty());
    }

    #[test]
    fn infrastructure_prefix_wins_over_layer() {
        let tls = vec![tl("kepler/exporter-0", "exporter", LayerTag::Service, 2.0, 10)];
        let l = attribute_energy(&tls, &selector()).unwrap();
        assert_eq!(l.sut_joules, 0.0);
        assert_eq!(l.overhead_joules, 20.0);
    }

    #[test]
    fn selector_matching_nothing_warns() {
        let tls = vec![tl("shop/web-0", "web", LayerTag::Service, 5.0, 10)];
        let sel = SutSelector::new(vec!["auth".into()], vec![]);
        let l = attribute_energy(&tls, &sel).unwrap();
        assert_eq!(l.sut_joules, 0.0);
        assert_eq!(l.warnings.len(), 1);
    }

    #[test]
    fn no_energy_is_an_error() {
        let mut t = tl("shop/web-0", "web", LayerTag::Service, 0.0, 10);
        t.watts = vec![None; 10];
        assert_eq!(
            attribute_energy(&[t], &selector()),
            Err(AggError::NoEnergySource)
        );
    }

    #[test]
    fn colocated_non_sut_replica_is_flagged() {
        let tls = vec![
            tl("shop/web-0", "web", LayerTag::Service, 5.0, 10),
            tl("load/locust-0", "locust", LayerTag::Application, 1.0, 10),
        ];
        let sel = SutSelector::new(vec!["web".into()], vec![]);
        let l = attribute_energy(&tls, &sel).unwrap();
        assert_eq!(l.excluded_joules, 10.0);
        assert!(l.warnings[0].contains("load/locust-0"));
    }

    proptest! {
        #[test]
        fn attribution_is_additive(
            spec in prop::collection::vec((0usize..4, 0u32..40, prop::bool::ANY), 2..12),
            split in 1usize..11,
        ) {
            let layers = [LayerTag::Service, LayerTag::Platform, LayerTag::Isolation, LayerTag::Physical];
            let tls: Vec<ResourceTimeline> = spec
                .iter()
                .enumerate()
                .map(|(i, (l, w, infra))| {
                    let layer = layers[*l];
                    let name = match (layer, infra) {
                        (LayerTag::Physical, _) => format!("node/n{i}"),
                        (_, true) => format!("kube-system/p{i}"),
                        _ => format!("app/p{i}"),
                    };
                    let mut t = tl(&name, "svc", layer, *w as f64 * 0.5, 8);
                    t.node = format!("n{i}");
                    t
                })
                .collect();
            let split = split.min(tls.len() - 1);
            let (a, b) = tls.split_at(split);
            let sel = selector();
            let (Ok(whole), Ok(la), Ok(lb)) = (
                attribute_energy(&tls, &sel),
                attribute_energy(a, &sel),
                attribute_energy(b, &sel),
            ) else {
                return Ok(());
            };
            let mut merged = la.clone();
            merged.merge(&lb);
            prop_assert_eq!(merged.sut_joules, whole.sut_joules);
            prop_assert_eq!(merged.overhead_joules, whole.overhead_joules);
            prop_assert_eq!(merged.per_layer, whole.per_layer);
            prop_assert_eq!(merged.node_joules, whole.node_joules);
        }
    }
}

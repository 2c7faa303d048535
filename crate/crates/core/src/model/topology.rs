use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::time::Timestamp;
use super::types::{DeploymentKind, LayerTag, ResourceSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleEvent {
    Created,
    Ready,
    Terminated,
}

/// What the cluster knows about one replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodInfo {
    pub node: String,
    pub service: String,
    pub layer: LayerTag,
    #[serde(default)]
    pub kind: DeploymentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ResourceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lifecycle: Vec<(LifecycleEvent, Timestamp)>,
}

impl PodInfo {
    pub fn created(&self) -> Option<Timestamp> {
        self.event(LifecycleEvent::Created)
    }

    pub fn terminated(&self) -> Option<Timestamp> {
        self.event(LifecycleEvent::Terminated)
    }

    fn event(&self, e: LifecycleEvent) -> Option<Timestamp> {
        self.lifecycle.iter().find(|(ev, _)| *ev == e).map(|(_, t)| *t)
    }

    /// Whether the replica is provisioned during grid second `sec`.
    /// `None` when the lifecycle is unknown.
    pub fn live_at(&self, sec: i64) -> Option<bool> {
        let created = self.created()?;
        let start = Timestamp::from_secs(sec);
        let alive_after = self.terminated().is_none_or(|t| t > start);
        Some(created <= start && alive_after)
    }
}

/// Replica id → placement and attribution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub pods: BTreeMap<String, PodInfo>,
    /// All node ids, including nodes without replicas.
    #[serde(default)]
    pub nodes: Vec<String>,
}

impl Topology {
    pub fn get(&self, pod: &str) -> Option<&PodInfo> {
        self.pods.get(pod)
    }

    /// Classifies a `namespace/name` pod id against infrastructure prefixes.
    pub fn is_infrastructure(pod_or_service: &str, prefixes: &[String]) -> bool {
        prefixes.iter().any(|p| pod_or_service.starts_with(p.as_str()))
    }
}

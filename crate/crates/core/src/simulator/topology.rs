use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ConfigError, DeploymentKind, DocFormat, LayerTag, ResourceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimNode {
    /// Millicores.
    pub cpu_capacity: f64,
    /// Bytes.
    pub mem_capacity: u64,
    pub p_idle: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoscalerSpec {
    #[serde(default = "half")]
    pub target_cpu_fraction: f64,
    /// Seconds the scale-up signal must persist before replicas are added.
    #[serde(default = "thirty")]
    pub scale_up_delay: u64,
    #[serde(default = "sixty")]
    pub scale_down_delay: u64,
}

fn half() -> f64 {
    0.5
}
fn thirty() -> u64 {
    30
}
fn sixty() -> u64 {
    60
}

impl Default for AutoscalerSpec {
    fn default() -> Self {
        AutoscalerSpec {
            target_cpu_fraction: half(),
            scale_up_delay: thirty(),
            scale_down_delay: sixty(),
        }
    }
}

/// A deployable unit. Pod services run `replicas_min` replicas, or follow
/// their autoscaler between `replicas_min` and `replicas_max`. Function
/// services start with no instances and may grow to `replicas_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimService {
    #[serde(default = "default_namespace")]
    pub namespace: String,
    #[serde(default = "default_layer")]
    pub layer: LayerTag,
    #[serde(default)]
    pub kind: DeploymentKind,
    /// CPU time one request costs this service; 0 for services off the
    /// request path.
    #[serde(default)]
    pub per_request_cpu_ms: f64,
    /// Seconds one request spends in this service, before jitter.
    #[serde(default = "default_service_time")]
    pub service_time: f64,
    #[serde(default)]
    pub mem_floor: u64,
    /// Extra working set per request served in a second.
    #[serde(default)]
    pub mem_per_request: u64,
    /// Millicores burned while idle.
    #[serde(default)]
    pub idle_cpu: f64,
    pub resources: ResourceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autoscaler: Option<AutoscalerSpec>,
    /// Seconds from creation to readiness for pods.
    #[serde(default)]
    pub startup: u64,
    /// Extra latency of the first request on a fresh function instance.
    #[serde(default)]
    pub cold_start: f64,
    /// Services every request visits after this one, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<String>,
    /// Path prefixes this service accepts from clients.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
}

fn default_namespace() -> String {
    "default".into()
}
fn default_layer() -> LayerTag {
    LayerTag::Application
}
fn default_service_time() -> f64 {
    0.05
}

impl SimService {
    pub fn is_function(&self) -> bool {
        self.kind == DeploymentKind::Function
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTopology {
    pub nodes: BTreeMap<String, SimNode>,
    pub services: BTreeMap<String, SimService>,
}

impl SimTopology {
    pub fn from_value(v: serde_json::Value) -> Result<Self, ConfigError> {
        let t: SimTopology = serde_path_to_error::deserialize(v).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let v = DocFormat::from_path(path)
            .parse(&text)
            .map_err(|e| ConfigError::Schema {
                path: path.display().to_string(),
                message: e,
            })?;
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |path: String, rule: &str| ConfigError::Invariant {
            path,
            rule: rule.to_string(),
        };
        if self.nodes.is_empty() {
            return Err(bad("nodes".into(), "at least one node"));
        }
        for (id, n) in &self.nodes {
            if !(n.cpu_capacity > 0.0) || n.mem_capacity == 0 {
                return Err(bad(format!("nodes.{id}"), "capacities must be positive"));
            }
            if !(n.p_idle >= 0.0 && n.p_max >= n.p_idle) {
                return Err(bad(format!("nodes.{id}"), "p_max ≥ p_idle ≥ 0"));
            }
        }
        for (name, s) in &self.services {
            let at = |f: &str| format!("services.{name}.{f}");
            if !(s.service_time > 0.0) {
                return Err(bad(at("service_time"), "service_time > 0"));
            }
            if !(s.per_request_cpu_ms >= 0.0 && s.idle_cpu >= 0.0 && s.cold_start >= 0.0) {
                return Err(bad(at("per_request_cpu_ms"), "costs must be ≥ 0"));
            }
            let r = &s.resources;
            if !(r.cpu_limit > 0.0) || r.mem_limit == 0 {
                return Err(bad(at("resources"), "limits must be positive"));
            }
            if r.replicas_max < r.replicas_min || r.replicas_max == 0 {
                return Err(bad(at("resources"), "replicas_max ≥ max(replicas_min, 1)"));
            }
            if !s.is_function() && r.replicas_min == 0 {
                return Err(bad(at("resources.replicas_min"), "pods need replicas_min ≥ 1"));
            }
            if s.per_request_cpu_ms > r.cpu_limit {
                return Err(bad(at("per_request_cpu_ms"), "a request must fit into one replica-second"));
            }
            if let Some(a) = &s.autoscaler {
                if !(a.target_cpu_fraction > 0.0 && a.target_cpu_fraction <= 1.0) {
                    return Err(bad(at("autoscaler.target_cpu_fraction"), "∈ (0, 1]"));
                }
            }
            for c in &s.calls {
                if !self.services.contains_key(c) {
                    return Err(bad(at("calls"), &format!("unknown service `{c}`")));
                }
            }
            if let Some(n) = &s.node {
                if !self.nodes.contains_key(n) {
                    return Err(bad(at("node"), &format!("unknown node `{n}`")));
                }
            }
        }
        if !self.services.values().any(|s| !s.routes.is_empty()) {
            return Err(bad("services".into(), "no service declares routes"));
        }
        for name in self.services.keys() {
            self.chain(name)
                .map_err(|m| bad(format!("services.{name}.calls"), &m))?;
        }
        Ok(())
    }

    /// Services one request to `entry` visits, in order.
    pub fn chain(&self, entry: &str) -> Result<Vec<String>, String> {
        fn walk(
            t: &SimTopology,
            s: &str,
            stack: &mut Vec<String>,
            out: &mut Vec<String>,
        ) -> Result<(), String> {
            if stack.iter().any(|x| x == s) {
                return Err(format!("call cycle through `{s}`"));
            }
            stack.push(s.to_string());
            out.push(s.to_string());
            for c in &t.services[s].calls {
                walk(t, c, stack, out)?;
            }
            stack.pop();
            Ok(())
        }
        let mut out = Vec::new();
        walk(self, entry, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Entry service for a request path: the longest matching route prefix.
    pub fn route(&self, path: &str) -> Option<&str> {
        self.services
            .iter()
            .flat_map(|(name, s)| s.routes.iter().map(move |r| (name, r)))
            .filter(|(_, r)| path.starts_with(r.as_str()))
            .max_by_key(|(_, r)| r.len())
            .map(|(name, _)| name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOPO: &str = r#"
[nodes.n1]
cpu_capacity = 4000
mem_capacity = 8589934592
p_idle = 50
p_max = 150

[services.front]
namespace = "shop"
per_request_cpu_ms = 10
resources = { cpu_limit = 500, mem_limit = 536870912 }
calls = ["db"]
routes = ["/"]

[services.db]
namespace = "shop"
per_request_cpu_ms = 5
resources = { cpu_limit = 500, mem_limit = 536870912 }

[services.api]
per_request_cpu_ms = 1
resources = { cpu_limit = 100, mem_limit = 1048576 }
routes = ["/api"]
"#;

    fn load(text: &str) -> Result<SimTopology, ConfigError> {
        SimTopology::from_value(DocFormat::Toml.parse(text).unwrap())
    }

    #[test]
    fn parses_chain_and_routes() {
        let t = load(TOPO).unwrap();
        assert_eq!(t.chain("front").unwrap(), vec!["front", "db"]);
        assert_eq!(t.route("/api/x"), Some("api"));
        assert_eq!(t.route("/cart"), Some("front"));
        assert_eq!(t.services["front"].service_time, 0.05);
    }

    #[test]
    fn rejects_cycles_and_bad_power() {
        let cyc = TOPO.replace("per_request_cpu_ms = 5\n", "per_request_cpu_ms = 5\ncalls = [\"front\"]\n");
        assert!(load(&cyc).is_err());
        let power = TOPO.replace("p_max = 150", "p_max = 10");
        assert!(load(&power).is_err());
    }
}

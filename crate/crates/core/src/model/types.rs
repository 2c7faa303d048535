use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::time::Timestamp;
use super::ModelError;

/// Position of a measurement in the cloud stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    Application,
    Service,
    Platform,
    Isolation,
    Physical,
}

impl LayerTag {
    pub const ALL: [LayerTag; 5] = [
        LayerTag::Application,
        LayerTag::Service,
        LayerTag::Platform,
        LayerTag::Isolation,
        LayerTag::Physical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Application => "application",
            LayerTag::Service => "service",
            LayerTag::Platform => "platform",
            LayerTag::Isolation => "isolation",
            LayerTag::Physical => "physical",
        }
    }

    /// Platform and isolation energy is runtime overhead, never application energy.
    pub fn is_overhead(self) -> bool {
        matches!(self, LayerTag::Platform | LayerTag::Isolation)
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerTag {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerTag::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ModelError::Parse(format!("unknown layer `{s}`")))
    }
}

/// What a sample measures. Energy counters are converted to power during
/// resampling; everything else is a gauge except `RequestCount`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    CpuMillicores,
    CpuFraction,
    MemBytes,
    Watts,
    /// Cumulative energy counter in joules.
    EnergyJoules,
    RequestCount,
    Custom,
}

impl SampleKind {
    pub const ALL: [SampleKind; 7] = [
        SampleKind::CpuMillicores,
        SampleKind::CpuFraction,
        SampleKind::MemBytes,
        SampleKind::Watts,
        SampleKind::EnergyJoules,
        SampleKind::RequestCount,
        SampleKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::CpuMillicores => "cpu_millicores",
            SampleKind::CpuFraction => "cpu_fraction",
            SampleKind::MemBytes => "mem_bytes",
            SampleKind::Watts => "watts",
            SampleKind::EnergyJoules => "energy_joules",
            SampleKind::RequestCount => "request_count",
            SampleKind::Custom => "custom",
        }
    }

    pub fn is_counter(self) -> bool {
        matches!(self, SampleKind::EnergyJoules | SampleKind::RequestCount)
    }

    pub fn is_energy(self) -> bool {
        matches!(self, SampleKind::Watts | SampleKind::EnergyJoules)
    }

    /// Canonical unit string stored alongside normalized values.
    pub fn canonical_unit(self) -> &'static str {
        match self {
            SampleKind::CpuMillicores => "m",
            SampleKind::CpuFraction => "1",
            SampleKind::MemBytes => "B",
            SampleKind::Watts => "W",
            SampleKind::EnergyJoules => "J",
            SampleKind::RequestCount => "1",
            SampleKind::Custom => "",
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SampleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Parse(format!("unknown sample kind `{s}`")))
    }
}

/// One timestamped scalar reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub timestamp: Timestamp,
    pub layer: LayerTag,
    pub source: String,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod: Option<String>,
    /// Filled in by enrichment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    pub kind: SampleKind,
    pub value: f64,
    pub unit: String,
}

impl MeasurementSample {
    /// Builds a sample, converting `unit` to the kind's canonical unit.
    ///
    /// This is the only place where Wh, kW, KiB and friends are accepted.
    #[allow(clippy::too_many_arguments)]
    pub fn normalized(
        timestamp: Timestamp,
        layer: LayerTag,
        source: impl Into<String>,
        node: impl Into<String>,
        pod: Option<String>,
        kind: SampleKind,
        value: f64,
        unit: &str,
    ) -> Result<Self, ModelError> {
        let (kind, value, unit) = normalize_unit(kind, value, unit)?;
        let sample = MeasurementSample {
            timestamp,
            layer,
            source: source.into(),
            node: node.into(),
            pod,
            service: None,
            kind,
            value,
            unit,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.value.is_finite() {
            return Err(ModelError::Invariant("sample value must be finite".into()));
        }
        match self.kind {
            SampleKind::CpuFraction if !(0.0..=1.0).contains(&self.value) => Err(
                ModelError::Invariant("cpu_fraction must lie in [0, 1]".into()),
            ),
            SampleKind::Watts | SampleKind::EnergyJoules if self.value < 0.0 => {
                Err(ModelError::Invariant("energy readings must be ≥ 0".into()))
            }
            SampleKind::MemBytes | SampleKind::CpuMillicores if self.value < 0.0 => {
                Err(ModelError::Invariant("resource usage must be ≥ 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Replica id for pod samples, `node/<id>` for node-level samples.
    pub fn series_owner(&self) -> String {
        match &self.pod {
            Some(p) => p.clone(),
            None => format!("node/{}", self.node),
        }
    }
}

fn normalize_unit(
    kind: SampleKind,
    value: f64,
    unit: &str,
) -> Result<(SampleKind, f64, String), ModelError> {
    let u = unit.trim();
    let bad = || ModelError::Parse(format!("unit `{unit}` is not valid for kind {kind}"));
    let (kind, factor) = match kind {
        SampleKind::Watts => match u {
            "" | "W" | "watts" => (kind, 1.0),
            "mW" => (kind, 1e-3),
            "kW" => (kind, 1e3),
            _ => return Err(bad()),
        },
        SampleKind::EnergyJoules => match u {
            "" | "J" | "Ws" => (kind, 1.0),
            "mJ" => (kind, 1e-3),
            "uJ" | "µJ" => (kind, 1e-6),
            "Wh" => (kind, 3600.0),
            "kWh" => (kind, 3.6e6),
            _ => return Err(bad()),
        },
        SampleKind::CpuMillicores => match u {
            "" | "m" | "millicores" | "mCPU" => (kind, 1.0),
            "cores" | "vCPU" | "cpu" => (kind, 1000.0),
            "n" | "nanocores" => (kind, 1e-6),
            _ => return Err(bad()),
        },
        SampleKind::CpuFraction => match u {
            "" | "1" | "fraction" => (kind, 1.0),
            "%" | "percent" => (kind, 0.01),
            _ => return Err(bad()),
        },
        SampleKind::MemBytes => match u {
            "" | "B" | "bytes" => (kind, 1.0),
            "KiB" | "Ki" => (kind, 1024.0),
            "MiB" | "Mi" => (kind, 1024.0 * 1024.0),
            "GiB" | "Gi" => (kind, 1024.0 * 1024.0 * 1024.0),
            "kB" | "KB" | "k" => (kind, 1e3),
            "MB" | "M" => (kind, 1e6),
            "GB" | "G" => (kind, 1e9),
            _ => return Err(bad()),
        },
        SampleKind::RequestCount => match u {
            "" | "1" | "requests" => (kind, 1.0),
            _ => return Err(bad()),
        },
        // Custom metrics keep their free-form unit untouched.
        SampleKind::Custom => return Ok((kind, value, u.to_string())),
    };
    Ok((kind, value * factor, kind.canonical_unit().to_string()))
}

/// One client-observed request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub start: Timestamp,
    /// Seconds from first request byte to last response byte.
    pub latency: f64,
    pub success: bool,
    pub endpoint: String,
    pub status: u16,
}

impl RequestRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.latency.is_finite() || self.latency < 0.0 {
            return Err(ModelError::Invariant(
                "request latency must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-replica limits and replica bounds of one service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    /// Millicores.
    pub cpu_limit: f64,
    /// Bytes.
    pub mem_limit: u64,
    #[serde(default = "one")]
    pub replicas_min: u32,
    #[serde(default = "one")]
    pub replicas_max: u32,
}

fn one() -> u32 {
    1
}

impl ResourceSpec {
    pub fn new(cpu_limit: f64, mem_limit: u64) -> Self {
        ResourceSpec {
            cpu_limit,
            mem_limit,
            replicas_min: 1,
            replicas_max: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.cpu_limit.is_finite() && self.cpu_limit > 0.0) {
            return Err(ModelError::Invariant("cpu_limit > 0".into()));
        }
        if self.mem_limit == 0 {
            return Err(ModelError::Invariant("mem_limit > 0".into()));
        }
        if self.replicas_min < 1 {
            return Err(ModelError::Invariant("replicas_min ≥ 1".into()));
        }
        if self.replicas_max < self.replicas_min {
            return Err(ModelError::Invariant("replicas_max ≥ replicas_min".into()));
        }
        Ok(())
    }

    pub fn mem_limit_f64(&self) -> f64 {
        self.mem_limit as f64
    }
}

/// Where a variant's sources live. A git branch is one valid form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SourceRef {
    Path { path: PathBuf },
    Git { repo: String, branch: String },
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRef::Path { path } => write!(f, "{}", path.display()),
            SourceRef::Git { repo, branch } => write!(f, "{repo}#{branch}"),
        }
    }
}

/// One key-path override applied to a deployment descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    pub path: String,
    pub value: serde_json::Value,
}

impl Patch {
    pub fn new(path: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        Patch {
            path: path.into(),
            value: value.into(),
        }
    }
}

/// Optional per-variant changes to a shared workload.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_users: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_request_count: Option<u64>,
}

/// One buildable, deployable realization of the system under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    pub source: SourceRef,
    pub deployment_descriptor: PathBuf,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resource_specs: BTreeMap<String, ResourceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<Patch>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub workload_overrides: BTreeMap<String, WorkloadOverride>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadShape {
    /// Day-night curve with morning and afternoon peaks.
    Shaped,
    /// Constant users until a request budget is used up.
    Fixed,
    /// Constant users whose think time doubles after every request.
    Pausing,
    /// Linear ramp of users up to the peak.
    Stress,
}

impl WorkloadShape {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadShape::Shaped => "shaped",
            WorkloadShape::Fixed => "fixed",
            WorkloadShape::Pausing => "pausing",
            WorkloadShape::Stress => "stress",
        }
    }
}

pub const DEFAULT_PAUSING_USERS: u32 = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Directory and table label; defaults to the shape name.
    #[serde(default)]
    pub name: String,
    pub shape: WorkloadShape,
    /// Seconds. For `fixed` this is the upper bound on the run.
    pub duration: u64,
    #[serde(default)]
    pub peak_users: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_request_count: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Seconds between a response and the user's next request.
    #[serde(default)]
    pub think_time: f64,
    /// Leading seconds of the load window excluded from throughput.
    #[serde(default)]
    pub ramp_exclusion: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.duration == 0 {
            return Err(ModelError::Invariant("duration > 0".into()));
        }
        if self.peak_users < 1 {
            return Err(ModelError::Invariant("peak_users ≥ 1".into()));
        }
        if !(self.think_time.is_finite() && self.think_time >= 0.0) {
            return Err(ModelError::Invariant("think_time ≥ 0".into()));
        }
        match (self.shape, self.fixed_request_count) {
            (WorkloadShape::Fixed, None) => Err(ModelError::Invariant(
                "fixed_request_count is required when shape = fixed".into(),
            )),
            (WorkloadShape::Fixed, Some(0)) => {
                Err(ModelError::Invariant("fixed_request_count ≥ 1".into()))
            }
            (s, Some(_)) if s != WorkloadShape::Fixed => Err(ModelError::Invariant(
                "fixed_request_count is only allowed when shape = fixed".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn with_override(&self, o: &WorkloadOverride) -> WorkloadSpec {
        let mut w = self.clone();
        if let Some(d) = o.duration {
            w.duration = d;
        }
        if let Some(p) = o.peak_users {
            w.peak_users = p;
        }
        if let Some(t) = o.think_time {
            w.think_time = t;
        }
        if let Some(n) = o.fixed_request_count {
            w.fixed_request_count = Some(n);
        }
        w
    }
}

/// How a replica is billed and scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeploymentKind {
    #[default]
    Pod,
    Function,
}

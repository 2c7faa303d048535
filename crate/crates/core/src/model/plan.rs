//! Experiment plan document: parsing, defaults, validation and rendering.
//!
//! Plans are TOML. `crates/core/demo/plan.toml` is a runnable example
//! against the simulated cluster.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{VariantSpec, WorkloadShape, WorkloadSpec, DEFAULT_PAUSING_USERS};
use super::ConfigError;
use crate::aggregator::{CleaningConfig, CleaningMethod};
use crate::collectors::CollectorConfig;
use crate::metrics::{AuxModel, CostBook, OverProvisionRule};
use crate::runner::DriverConfig;
use crate::workloads::Scenario;

pub const DEFAULT_SETTLE: u64 = 60;
pub const DEFAULT_INTER_RUN_SETTLE: u64 = 120;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.9;

/// Namespace or pod-name prefixes classified as platform infrastructure.
pub fn default_infrastructure_prefixes() -> Vec<String> {
    [
        "kube-system",
        "monitoring",
        "observability",
        "kepler",
        "knative-serving",
        "knative-eventing",
        "istio-system",
        "kourier-system",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// Variants × workloads × repetitions plus everything needed to run and
/// evaluate them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    /// Seconds between readiness and load start.
    #[serde(default = "default_settle")]
    pub settle: u64,
    /// Seconds between cells when the deployment is kept.
    #[serde(default = "default_inter_run_settle")]
    pub inter_run_settle: u64,
    #[serde(default = "yes")]
    pub teardown_between_runs: bool,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// Minimum fraction of the run window a mandatory collector must cover.
    #[serde(default = "default_coverage_threshold")]
    pub coverage_threshold: f64,
    /// Seconds to wait for a deployment to become ready.
    #[serde(default = "default_ready_timeout")]
    pub ready_timeout: f64,
    pub output_dir: PathBuf,
    #[serde(default = "default_infrastructure_prefixes")]
    pub infrastructure_prefixes: Vec<String>,
    /// Services counted as the system under test. Empty means every
    /// application- or service-layer replica outside the infrastructure
    /// prefixes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sut_services: Vec<String>,
    pub variants: Vec<VariantSpec>,
    pub workloads: Vec<WorkloadSpec>,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub collectors: Vec<CollectorConfig>,
    #[serde(default)]
    pub cost_book: CostBook,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default)]
    pub aux: AuxModel,
    #[serde(default)]
    pub over_provision: OverProvisionRule,
    #[serde(default)]
    pub driver: DriverConfig,
    /// Directory relative paths in the plan are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_repetitions() -> u32 {
    1
}
fn default_settle() -> u64 {
    DEFAULT_SETTLE
}
fn default_inter_run_settle() -> u64 {
    DEFAULT_INTER_RUN_SETTLE
}
fn yes() -> bool {
    true
}
fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}
fn default_coverage_threshold() -> f64 {
    DEFAULT_COVERAGE_THRESHOLD
}
fn default_ready_timeout() -> f64 {
    300.0
}

/// Parses and validates a plan document. Relative paths stay relative.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan, ConfigError> {
    let de = toml::Deserializer::new(text);
    let mut plan: ExperimentPlan = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Schema {
            path,
            message: inner.message().to_string(),
        }
    })?;
    plan.apply_defaults();
    plan.validate()?;
    Ok(plan)
}

/// Reads a plan file; relative paths resolve against its directory.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut plan = parse_plan(&text)?;
    plan.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(plan)
}

/// Serializes a plan back into its document form.
pub fn render_plan(plan: &ExperimentPlan) -> String {
    toml::to_string(plan).expect("plans always serialize")
}

impl ExperimentPlan {
    fn apply_defaults(&mut self) {
        for w in &mut self.workloads {
            if w.name.is_empty() {
                w.name = w.shape.as_str().to_string();
            }
            if w.shape == WorkloadShape::Pausing && w.peak_users == 0 {
                w.peak_users = DEFAULT_PAUSING_USERS;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |path: &str, rule: &str| ConfigError::Invariant {
            path: path.to_string(),
            rule: rule.to_string(),
        };
        if self.repetitions < 1 {
            return Err(inv("repetitions", "repetitions ≥ 1"));
        }
        if self.max_attempts < 1 {
            return Err(inv("max_attempts", "max_attempts ≥ 1"));
        }
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0) {
            return Err(inv("coverage_threshold", "coverage_threshold ∈ (0, 1]"));
        }
        if !(self.ready_timeout.is_finite() && self.ready_timeout > 0.0) {
            return Err(inv("ready_timeout", "ready_timeout > 0"));
        }
        if self.variants.is_empty() {
            return Err(inv("variants", "at least one variant"));
        }
        if self.workloads.is_empty() {
            return Err(inv("workloads", "at least one workload"));
        }

        let mut names = BTreeSet::new();
        for (i, v) in self.variants.iter().enumerate() {
            let at = format!("variants[{i}]");
            check_label(&v.name).map_err(|r| inv(&format!("{at}.name"), &r))?;
            if !names.insert(v.name.as_str()) {
                return Err(inv(
                    &format!("{at}.name"),
                    &format!("variant names must be unique (`{}` repeats)", v.name),
                ));
            }
            for (svc, spec) in &v.resource_specs {
                spec.validate().map_err(|e| {
                    inv(&format!("{at}.resource_specs.{svc}"), &e.to_string())
                })?;
            }
        }

        let mut wl_names = BTreeSet::new();
        for (i, w) in self.workloads.iter().enumerate() {
            let at = format!("workloads[{i}]");
            check_label(&w.name).map_err(|r| inv(&format!("{at}.name"), &r))?;
            if !wl_names.insert(w.name.as_str()) {
                return Err(inv(
                    &format!("{at}.name"),
                    &format!("workload names must be unique (`{}` repeats)", w.name),
                ));
            }
            w.validate().map_err(|e| inv(&at, &e.to_string()))?;
        }
        for (i, v) in self.variants.iter().enumerate() {
            for (wname, o) in &v.workload_overrides {
                let Some(base) = self.workloads.iter().find(|w| &w.name == wname) else {
                    return Err(inv(
                        &format!("variants[{i}].workload_overrides.{wname}"),
                        "override names an unknown workload",
                    ));
                };
                base.with_override(o).validate().map_err(|e| {
                    inv(
                        &format!("variants[{i}].workload_overrides.{wname}"),
                        &e.to_string(),
                    )
                })?;
            }
        }

        let mut ids = BTreeSet::new();
        for (i, c) in self.collectors.iter().enumerate() {
            let at = format!("collectors[{i}]");
            if !ids.insert(c.id.as_str()) {
                return Err(inv(
                    &format!("{at}.id"),
                    &format!("collector ids must be unique (`{}` repeats)", c.id),
                ));
            }
            c.validate().map_err(|r| inv(&at, &r))?;
        }

        if self.scenario.steps.is_empty() {
            return Err(inv("scenario.steps", "at least one scenario step"));
        }
        if self.scenario.steps.iter().all(|s| s.weight == 0) {
            return Err(inv("scenario.steps", "at least one step with weight > 0"));
        }
        self.cleaning
            .validate()
            .map_err(|r| inv("cleaning", &r))?;
        self.cost_book
            .validate()
            .map_err(|r| inv("cost_book", &r))?;
        self.aux.validate().map_err(|r| inv("aux", &r))?;
        self.over_provision
            .validate()
            .map_err(|r| inv("over_provision", &r))?;
        Ok(())
    }

    /// The workload as seen by one variant, after its overrides.
    pub fn workload_for(&self, variant: &VariantSpec, workload: &WorkloadSpec) -> WorkloadSpec {
        variant
            .workload_overrides
            .get(&workload.name)
            .map(|o| workload.with_override(o))
            .unwrap_or_else(|| workload.clone())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn cleaning_enabled(&self) -> bool {
        self.cleaning.method != CleaningMethod::None
    }
}

fn check_label(name: &str) -> Result<(), String> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(format!(
            "`{name}` must be non-empty and use only letters, digits, '-', '_' or '.'"
        ))
    }
}

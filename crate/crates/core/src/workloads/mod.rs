//! Workload shapes as user-concurrency schedules, and drivers that run a
//! schedule of closed-loop virtual users against a target.

mod drive;
mod log;
mod realtime;
mod schedule;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use drive::{drive_virtual, Admission, Completion, DriveResult, Submission, VirtualTarget};
pub use log::{read_request_log, write_request_log};
pub use realtime::{drive_realtime, HttpExecutor, Outcome, RequestExecutor};
pub use schedule::{build_schedule, StopCondition, ThinkPolicy, UserSchedule};

/// One weighted request a virtual user may pick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    #[serde(default = "default_method")]
    pub method: String,
    /// Path template; `{user}` and `{iteration}` are substituted.
    pub path: String,
    #[serde(default = "default_weight")]
    pub weight: u32,
    /// Overrides the workload's think time after this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_time: Option<f64>,
}

fn default_method() -> String {
    "GET".into()
}
fn default_weight() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            steps: vec![ScenarioStep {
                method: default_method(),
                path: "/".into(),
                weight: 1,
                think_time: None,
            }],
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let s: Scenario = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.steps.iter().map(|s| s.weight as u64).sum::<u64>() == 0 {
            return Err("scenario needs a step with weight > 0".into());
        }
        for s in &self.steps {
            if let Some(t) = s.think_time {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(format!("think_time of `{}` must be ≥ 0", s.path));
                }
            }
        }
        Ok(())
    }

    /// Weighted pick.
    pub fn pick<R: Rng>(&self, rng: &mut R) -> &ScenarioStep {
        let total: u64 = self.steps.iter().map(|s| s.weight as u64).sum();
        let mut x = rng.gen_range(0..total.max(1));
        for s in &self.steps {
            if x < s.weight as u64 {
                return s;
            }
            x -= s.weight as u64;
        }
        &self.steps[0]
    }
}

pub(crate) fn expand_path(template: &str, user: usize, iteration: u64) -> String {
    template
        .replace("{user}", &user.to_string())
        .replace("{iteration}", &iteration.to_string())
}

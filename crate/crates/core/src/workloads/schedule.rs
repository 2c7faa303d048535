use serde::{Deserialize, Serialize};

use crate::model::{ModelError, WorkloadShape, WorkloadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    Duration,
    RequestCount(u64),
}

/// Pause of a virtual user between a response and its next request.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinkPolicy {
    Constant(f64),
    /// The k-th pause of a user (k from 0) is `base × 2^k`.
    Doubling(f64),
}

impl ThinkPolicy {
    pub fn gap(self, k: u64) -> f64 {
        match self {
            ThinkPolicy::Constant(t) => t,
            ThinkPolicy::Doubling(base) => base * 2f64.powi(k.min(1000) as i32),
        }
    }
}

/// Target concurrency per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSchedule {
    /// Seconds per entry; always 1.
    pub step: u64,
    pub target_users: Vec<u32>,
    pub stop: StopCondition,
    pub think: ThinkPolicy,
    pub seed: u64,
}

impl UserSchedule {
    pub fn duration(&self) -> u64 {
        self.target_users.len() as u64 * self.step
    }

    pub fn users_at(&self, sec: usize) -> u32 {
        self.target_users.get(sec).copied().unwrap_or(0)
    }
}

/// Pausing users wait one second before their first doubling when the spec
/// leaves think time at zero.
const PAUSING_BASE: f64 = 1.0;

pub fn build_schedule(spec: &WorkloadSpec) -> Result<UserSchedule, ModelError> {
    spec.validate()?;
    let n = spec.duration as usize;
    let peak = spec.peak_users;
    let (target_users, stop, think) = match spec.shape {
        WorkloadShape::Stress => {
            let users = (0..n)
                .map(|i| {
                    if n == 1 {
                        peak
                    } else {
                        (peak as f64 * i as f64 / (n - 1) as f64).round() as u32
                    }
                })
                .collect();
            (users, StopCondition::Duration, ThinkPolicy::Constant(spec.think_time))
        }
        WorkloadShape::Fixed => (
            vec![peak; n],
            StopCondition::RequestCount(spec.fixed_request_count.unwrap_or(0)),
            ThinkPolicy::Constant(spec.think_time),
        ),
        WorkloadShape::Pausing => {
            let base = if spec.think_time > 0.0 {
                spec.think_time
            } else {
                PAUSING_BASE
            };
            (vec![peak; n], StopCondition::Duration, ThinkPolicy::Doubling(base))
        }
        WorkloadShape::Shaped => (
            shaped_curve(n, peak),
            StopCondition::Duration,
            ThinkPolicy::Constant(spec.think_time),
        ),
    };
    Ok(UserSchedule {
        step: 1,
        target_users,
        stop,
        think,
        seed: spec.seed,
    })
}

/// Relative day-night demand at day fraction `x ∈ [0, 1)`: morning and
/// afternoon peaks, a lunch and an evening bump.
fn day_curve(x: f64) -> f64 {
    let hour = x * 24.0;
    let bump = |center: f64, width: f64, height: f64| {
        let d = (hour - center) / width;
        height * (-0.5 * d * d).exp()
    };
    bump(9.0, 1.0, 1.0) + bump(17.0, 1.0, 1.0) + bump(13.0, 1.5, 0.4) + bump(20.5, 1.5, 0.3)
}

fn shaped_curve(n: usize, peak: u32) -> Vec<u32> {
    let raw: Vec<f64> = (0..n).map(|i| day_curve((i as f64 + 0.5) / n as f64)).collect();
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    let floor = ((peak as f64 * 0.05).ceil() as u32).max(1).min(peak);
    raw.iter()
        .map(|v| ((peak as f64 * v / max).round() as u32).clamp(floor, peak))
        .collect()
}

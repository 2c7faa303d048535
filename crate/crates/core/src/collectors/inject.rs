use serde::{Deserialize, Serialize};

use crate::model::{MeasurementSample, SampleKind};

/// Deterministic sample loss for testing fault handling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    pub drop_fraction: f64,
    #[serde(default = "energy_kinds")]
    pub kinds: Vec<SampleKind>,
    /// Attempts the loss applies to; empty means every attempt.
    #[serde(default)]
    pub attempts: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
}

fn energy_kinds() -> Vec<SampleKind> {
    vec![SampleKind::Watts, SampleKind::EnergyJoules]
}

impl FaultInjection {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop_fraction) {
            return Err("inject.drop_fraction ∈ [0, 1]".into());
        }
        Ok(())
    }
}

pub struct Injector<'a> {
    spec: &'a FaultInjection,
}

impl<'a> Injector<'a> {
    pub fn new(spec: &'a FaultInjection) -> Self {
        Injector { spec }
    }

    /// Whether a sample is lost. Depends only on the seed, owner, kind and
    /// timestamp, so the outcome does not change with poll boundaries.
    pub fn drops(&self, s: &MeasurementSample) -> bool {
        if !self.spec.kinds.contains(&s.kind) {
            return false;
        }
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.spec.seed;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(s.series_owner().as_bytes());
        feed(s.kind.as_str().as_bytes());
        feed(&s.timestamp.millis().to_le_bytes());
        let u = (splitmix(h) >> 11) as f64 / (1u64 << 53) as f64;
        u < self.spec.drop_fraction
    }

    pub fn apply(&self, attempt: u32, samples: &mut Vec<MeasurementSample>) {
        if !self.spec.attempts.is_empty() && !self.spec.attempts.contains(&attempt) {
            return;
        }
        samples.retain(|s| !self.drops(s));
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

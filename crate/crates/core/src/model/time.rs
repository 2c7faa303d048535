use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// UTC instant with millisecond resolution, counted from the unix epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn from_secs(s: i64) -> Self {
        Timestamp(s * 1000)
    }

    /// Rounds to the nearest millisecond.
    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1000.0).round() as i64)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// The grid second containing this instant.
    pub fn floor_sec(self) -> i64 {
        self.0.div_euclid(1000)
    }

    /// The first grid second at or after this instant.
    pub fn ceil_sec(self) -> i64 {
        -(-self.0).div_euclid(1000)
    }

    pub fn add_secs_f64(self, s: f64) -> Self {
        Timestamp(self.0 + (s * 1000.0).round() as i64)
    }

    pub fn now() -> Self {
        let d = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(d.as_millis() as i64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let (secs, ms) = (abs / 1000, abs % 1000);
        if ms == 0 {
            write!(f, "{sign}{secs}")
        } else {
            let frac = format!("{ms:03}");
            write!(f, "{sign}{secs}.{}", frac.trim_end_matches('0'))
        }
    }
}

impl FromStr for Timestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| format!("invalid timestamp `{s}`"))?;
        if !v.is_finite() {
            return Err(format!("invalid timestamp `{s}`"));
        }
        Ok(Timestamp::from_secs_f64(v))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 % 1000 == 0 {
            serializer.serialize_i64(self.0 / 1000)
        } else {
            serializer.serialize_f64(self.as_secs_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("non-finite timestamp"));
        }
        Ok(Timestamp::from_secs_f64(v))
    }
}

use std::time::Duration;

use serde::Deserialize;

use super::{CollectorConfig, Fetched};
use crate::model::{LayerTag, MeasurementSample, SampleKind, Timestamp};

#[derive(Deserialize)]
struct Reading {
    watts: f64,
    /// Seconds since the epoch; the poll time when absent.
    #[serde(default)]
    ts: Option<f64>,
}

/// Parses one `{"watts": .., "ts": ..}` reading from a wall power meter.
/// A JSON array of readings is accepted as well.
pub fn parse_meter_reading(body: &str, fallback: Timestamp) -> Result<Vec<(Timestamp, f64)>, String> {
    let readings: Vec<Reading> = if body.trim_start().starts_with('[') {
        serde_json::from_str(body).map_err(|e| e.to_string())?
    } else {
        vec![serde_json::from_str(body).map_err(|e| e.to_string())?]
    };
    Ok(readings
        .into_iter()
        .map(|r| (r.ts.map_or(fallback, Timestamp::from_secs_f64), r.watts))
        .collect())
}

pub(super) fn poll_meter(config: &CollectorConfig, _window: (Timestamp, Timestamp)) -> Fetched {
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(10))
        .build();
    let body = match agent.get(&config.endpoint).call() {
        Ok(r) => r.into_string().map_err(|e| e.to_string())?,
        Err(ureq::Error::Status(code, _)) => return Err(format!("HTTP {code}")),
        Err(e) => return Err(e.to_string()),
    };
    let readings = parse_meter_reading(&body, Timestamp::now())?;
    let node = config.node.clone().unwrap_or_default();
    let mut samples = Vec::new();
    let mut problems = Vec::new();
    for (t, w) in readings {
        match MeasurementSample::normalized(t, LayerTag::Physical, &config.id, &node, None, SampleKind::Watts, w, "W") {
            Ok(s) => samples.push(s),
            Err(e) => problems.push(e.to_string()),
        }
    }
    Ok((samples, problems))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_array() {
        let t = Timestamp::from_secs(5);
        assert_eq!(
            parse_meter_reading(r#"{"watts": 41.5, "ts": 1700000000}"#, t).unwrap(),
            vec![(Timestamp::from_secs(1_700_000_000), 41.5)]
        );
        assert_eq!(
            parse_meter_reading(r#"[{"watts": 1}, {"watts": 2, "ts": 3}]"#, t).unwrap(),
            vec![(t, 1.0), (Timestamp::from_secs(3), 2.0)]
        );
        assert!(parse_meter_reading("{}", t).is_err());
    }
}

use super::MetricsError;
use crate::model::{RequestRecord, Timestamp};

/// FR: failed share of all requests.
pub fn failure_rate(requests: &[RequestRecord]) -> Result<f64, MetricsError> {
    if requests.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let failed = requests.iter().filter(|r| !r.success).count();
    Ok(failed as f64 / requests.len() as f64)
}

/// Rqs: successful requests started inside `[t0, t1)` per second.
pub fn throughput(
    requests: &[RequestRecord],
    (t0, t1): (Timestamp, Timestamp),
) -> Result<f64, MetricsError> {
    let len = (t1.millis() - t0.millis()) as f64 / 1000.0;
    if len <= 0.0 {
        return Err(MetricsError::EmptyWindow);
    }
    let n = requests
        .iter()
        .filter(|r| r.success && r.start >= t0 && r.start < t1)
        .count();
    Ok(n as f64 / len)
}

/// Nearest-rank quantiles of successful-request latency.
pub fn latency_quantiles(
    requests: &[RequestRecord],
    quantiles: &[f64],
) -> Result<Vec<f64>, MetricsError> {
    let mut lat: Vec<f64> = requests
        .iter()
        .filter(|r| r.success)
        .map(|r| r.latency)
        .collect();
    if lat.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    lat.sort_by(f64::total_cmp);
    let n = lat.len();
    Ok(quantiles
        .iter()
        .map(|q| {
            // tolerance keeps q·n that is integral in exact arithmetic integral
            let rank = (q * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
            lat[rank - 1]
        })
        .collect())
}

use std::time::Duration;

use serde_json::Value;

use super::{CollectorConfig, Fetched};
use crate::model::{LayerTag, MeasurementSample, SampleKind, Timestamp};

/// CPU quantity in millicores: `250m`, `1500000n`, `2`, `0.5`, `300u`.
pub fn parse_cpu_quantity(q: &str) -> Option<f64> {
    let q = q.trim();
    let (num, factor) = if let Some(n) = q.strip_suffix('n') {
        (n, 1e-6)
    } else if let Some(n) = q.strip_suffix('u') {
        (n, 1e-3)
    } else if let Some(n) = q.strip_suffix('m') {
        (n, 1.0)
    } else {
        (q, 1000.0)
    };
    let v: f64 = num.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v * factor)
}

/// Memory quantity in bytes: `128Mi`, `1Gi`, `500k`, `1e6`, `4096`.
pub fn parse_mem_quantity(q: &str) -> Option<f64> {
    const SUFFIXES: [(&str, f64); 10] = [
        ("Ki", 1024.0),
        ("Mi", 1048576.0),
        ("Gi", 1073741824.0),
        ("Ti", 1099511627776.0),
        ("k", 1e3),
        ("K", 1e3),
        ("M", 1e6),
        ("G", 1e9),
        ("T", 1e12),
        ("m", 1e-3),
    ];
    let q = q.trim();
    let (num, factor) = SUFFIXES
        .iter()
        .find_map(|(s, f)| q.strip_suffix(s).map(|n| (n, *f)))
        .unwrap_or((q, 1.0));
    let v: f64 = num.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v * factor)
}

/// Turns a metrics API `PodMetricsList` into cpu and memory samples, one
/// pair per pod summed over its containers.
pub fn parse_pod_metrics(
    body: &str,
    source: &str,
    layer: LayerTag,
) -> Result<(Vec<MeasurementSample>, usize), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let items = v
        .get("items")
        .and_then(Value::as_array)
        .ok_or("missing items")?;
    let mut out = Vec::new();
    let mut rejected = 0;
    for item in items {
        let meta = item.get("metadata");
        let name = meta.and_then(|m| m.get("name")).and_then(Value::as_str);
        let Some(name) = name else {
            rejected += 1;
            continue;
        };
        let pod = match meta.and_then(|m| m.get("namespace")).and_then(Value::as_str) {
            Some(ns) => format!("{ns}/{name}"),
            None => name.to_string(),
        };
        let ts = item
            .get("timestamp")
            .and_then(Value::as_str)
            .and_then(|s| chrono::DateTime::parse_from_rfc3339(s).ok())
            .map(|d| Timestamp::from_millis(d.timestamp_millis()));
        let Some(ts) = ts else {
            rejected += 1;
            continue;
        };
        let containers = item
            .get("containers")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let (mut cpu, mut mem) = (0.0, 0.0);
        let mut ok = true;
        for c in &containers {
            let usage = c.get("usage");
            let c_cpu = usage
                .and_then(|u| u.get("cpu"))
                .and_then(Value::as_str)
                .and_then(parse_cpu_quantity);
            let c_mem = usage
                .and_then(|u| u.get("memory"))
                .and_then(Value::as_str)
                .and_then(parse_mem_quantity);
            match (c_cpu, c_mem) {
                (Some(a), Some(b)) => {
                    cpu += a;
                    mem += b;
                }
                _ => ok = false,
            }
        }
        if !ok {
            rejected += 1;
            continue;
        }
        for (kind, value) in [(SampleKind::CpuMillicores, cpu), (SampleKind::MemBytes, mem)] {
            match MeasurementSample::normalized(ts, layer, source, "", Some(pod.clone()), kind, value, "") {
                Ok(s) => out.push(s),
                Err(_) => rejected += 1,
            }
        }
    }
    Ok((out, rejected))
}

/// The metrics API only knows the present, so one poll yields one reading
/// per pod stamped with the server's timestamp.
pub(super) fn poll_cluster(config: &CollectorConfig, _window: (Timestamp, Timestamp)) -> Fetched {
    let url = format!(
        "{}/apis/metrics.k8s.io/v1beta1/pods",
        config.endpoint.trim_end_matches('/')
    );
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(30))
        .build();
    let body = match agent.get(&url).call() {
        Ok(r) => r.into_string().map_err(|e| e.to_string())?,
        Err(ureq::Error::Status(code, _)) => return Err(format!("HTTP {code}")),
        Err(e) => return Err(e.to_string()),
    };
    let layer = config
        .queries
        .first()
        .map_or(LayerTag::Application, |q| q.layer);
    let (samples, rejected) = parse_pod_metrics(&body, &config.id, layer)?;
    let problems = if rejected > 0 {
        vec![format!("rejected {rejected} pod entries")]
    } else {
        Vec::new()
    };
    Ok((samples, problems))
}

use std::collections::BTreeMap;
use std::io::Read;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use super::RawSeries;
use crate::model::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsdbError {
    #[error("HTTP {status}: {excerpt}")]
    Http { status: u16, excerpt: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RangeResult {
    pub series: Vec<RawSeries>,
    /// NaN and infinite points removed from the response.
    pub dropped_non_finite: usize,
}

const EXCERPT: usize = 200;

/// Runs a range query against a Prometheus-compatible HTTP API.
pub fn tsdb_range_query(
    endpoint: &str,
    query: &str,
    (t0, t1): (Timestamp, Timestamp),
    step: u64,
) -> Result<RangeResult, TsdbError> {
    let url = format!("{}/api/v1/query_range", endpoint.trim_end_matches('/'));
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(30))
        .build();
    let resp = agent
        .get(&url)
        .query("query", query)
        .query("start", &t0.to_string())
        .query("end", &t1.to_string())
        .query("step", &step.to_string())
        .call();
    let resp = match resp {
        Ok(r) => r,
        Err(ureq::Error::Status(status, r)) => {
            let body = r.into_string().unwrap_or_default();
            return Err(TsdbError::Http {
                status,
                excerpt: body.chars().take(EXCERPT).collect(),
            });
        }
        Err(ureq::Error::Transport(t)) => return Err(TsdbError::Transport(t.to_string())),
    };
    let mut body = String::new();
    resp.into_reader()
        .read_to_string(&mut body)
        .map_err(|e| TsdbError::Transport(e.to_string()))?;
    parse_range_response(&body)
}

/// Parses a `matrix` range-query body. Non-finite points are dropped and
/// counted.
pub fn parse_range_response(body: &str) -> Result<RangeResult, TsdbError> {
    let malformed = |what: &str| TsdbError::Malformed(what.to_string());
    let v: Value = serde_json::from_str(body).map_err(|e| TsdbError::Malformed(e.to_string()))?;
    if v.get("status").and_then(Value::as_str) != Some("success") {
        let err = v.get("error").and_then(Value::as_str).unwrap_or("status is not success");
        return Err(TsdbError::Malformed(err.to_string()));
    }
    let data = v.get("data").ok_or_else(|| malformed("missing data"))?;
    match data.get("resultType").and_then(Value::as_str) {
        Some("matrix") => {}
        other => return Err(TsdbError::Malformed(format!("expected matrix result, got {other:?}"))),
    }
    let result = data
        .get("result")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing result"))?;
    let mut out = RangeResult::default();
    for entry in result {
        let labels: BTreeMap<String, String> = entry
            .get("metric")
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                    .collect()
            })
            .unwrap_or_default();
        let values = entry
            .get("values")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("series without values"))?;
        let mut points = Vec::with_capacity(values.len());
        for pair in values {
            let (ts, val) = match pair.as_array().map(Vec::as_slice) {
                Some([ts, val]) => (ts, val),
                _ => return Err(malformed("point is not a [time, value] pair")),
            };
            let ts = ts.as_f64().ok_or_else(|| malformed("non-numeric timestamp"))?;
            let val: f64 = match val {
                Value::String(s) => s.parse().map_err(|_| malformed("unparseable value"))?,
                Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                _ => return Err(malformed("unparseable value")),
            };
            if !val.is_finite() {
                out.dropped_non_finite += 1;
                continue;
            }
            points.push((Timestamp::from_secs_f64(ts), val));
        }
        out.series.push(RawSeries { labels, points });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BODY: &str = r#"{"status":"success","data":{"resultType":"matrix","result":[
        {"metric":{"pod":"auth-1","namespace":"shop"},"values":[[1700000000,"12.5"],[1700000001,"NaN"],[1700000002,"13"]]},
        {"metric":{"node":"n1"},"values":[[1700000000.5,"+Inf"]]}]}}"#;

    #[test]
    fn parses_matrix_and_drops_nan() {
        let r = parse_range_response(BODY).unwrap();
        assert_eq!(r.series.len(), 2);
        assert_eq!(r.dropped_non_finite, 2);
        assert_eq!(
            r.series[0].points,
            vec![
                (Timestamp::from_secs(1_700_000_000), 12.5),
                (Timestamp::from_secs(1_700_000_002), 13.0)
            ]
        );
        assert_eq!(r.series[0].labels["namespace"], "shop");
        assert!(r.series[1].points.is_empty());
    }

    #[test]
    fn error_status_is_malformed() {
        let e = parse_range_response(r#"{"status":"error","error":"bad query"}"#).unwrap_err();
        assert_eq!(e, TsdbError::Malformed("bad query".into()));
        assert!(parse_range_response("<html>").is_err());
        assert!(parse_range_response(
            r#"{"status":"success","data":{"resultType":"vector","result":[]}}"#
        )
        .is_err());
    }
}

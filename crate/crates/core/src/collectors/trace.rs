use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{CollectorConfig, Fetched};
use crate::model::{LayerTag, MeasurementSample, SampleKind, Timestamp};

pub const TRACE_HEADER: [&str; 8] = [
    "timestamp", "layer", "source", "node", "pod", "kind", "value", "unit",
];

/// Reads a recorded trace. Units are normalized; the recorded `source`
/// is kept so that a replayed canonical trace serializes back unchanged.
pub fn read_trace<R: Read>(input: R) -> Result<(Vec<MeasurementSample>, Vec<String>), String> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(format!("unexpected trace header {:?}", headers));
    }
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let parsed = (|| -> Result<MeasurementSample, String> {
            let ts: Timestamp = rec[0].parse().map_err(|_| "bad timestamp".to_string())?;
            let layer: LayerTag = rec[1].parse().map_err(|_| "bad layer".to_string())?;
            let kind: SampleKind = rec[5].parse().map_err(|_| "bad kind".to_string())?;
            let value: f64 = rec[6].parse().map_err(|_| "bad value".to_string())?;
            let pod = (!rec[4].is_empty()).then(|| rec[4].to_string());
            MeasurementSample::normalized(ts, layer, &rec[2], &rec[3], pod, kind, value, &rec[7])
                .map_err(|e| e.to_string())
        })();
        match parsed {
            Ok(s) => out.push(s),
            Err(e) => problems.push(format!("line {line}: {e}")),
        }
    }
    Ok((out, problems))
}

pub fn write_trace<W: Write>(out: W, samples: &[MeasurementSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for s in samples {
        w.write_record([
            s.timestamp.to_string(),
            s.layer.to_string(),
            s.source.clone(),
            s.node.clone(),
            s.pod.clone().unwrap_or_default(),
            s.kind.to_string(),
            s.value.to_string(),
            s.unit.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn poll_trace(
    config: &CollectorConfig,
    _window: (Timestamp, Timestamp),
    base_dir: &Path,
) -> Fetched {
    let path = base_dir.join(&config.endpoint);
    let file = File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_trace(file)
}

use std::io::{Read, Write};

use crate::model::{RequestRecord, Timestamp};

const HEADER: [&str; 5] = ["start", "endpoint", "status", "latency_s", "success"];

pub fn write_request_log<W: Write>(out: W, records: &[RequestRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.start.to_string(),
            r.endpoint.clone(),
            r.status.to_string(),
            r.latency.to_string(),
            r.success.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_request_log<R: Read>(input: R) -> Result<Vec<RequestRecord>, String> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(format!("unexpected request log header {:?}", headers));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("request log row {}: bad {what}", i + 2);
        let record = RequestRecord {
            start: rec[0].parse::<Timestamp>().map_err(|_| bad("start"))?,
            endpoint: rec[1].to_string(),
            status: rec[2].parse().map_err(|_| bad("status"))?,
            latency: rec[3].parse().map_err(|_| bad("latency_s"))?,
            success: rec[4].parse().map_err(|_| bad("success"))?,
        };
        record.validate().map_err(|e| format!("request log row {}: {e}", i + 2))?;
        out.push(record);
    }
    Ok(out)
}

//! Aggregated per-second CSV: one row per live replica second.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::resample::Grid;
use super::timeline::ResourceTimeline;
use crate::model::{LayerTag, Topology};

pub const MISSING_CPU: u8 = 1;
pub const MISSING_MEM: u8 = 2;
pub const MISSING_WATTS: u8 = 4;

const HEADER: [&str; 8] = [
    "second",
    "replica",
    "service",
    "layer",
    "cpu_millicores",
    "mem_bytes",
    "watts",
    "missing_flags",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows are ordered by second, then replica id.
pub fn write_timelines_csv<W: Write>(out: W, timelines: &[ResourceTimeline]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut order: Vec<&ResourceTimeline> = timelines.iter().collect();
    order.sort_by(|a, b| a.replica.cmp(&b.replica));
    let start = order.iter().map(|t| t.grid_start).min().unwrap_or(0);
    let end = order
        .iter()
        .map(|t| t.grid_start + t.len() as i64)
        .max()
        .unwrap_or(0);
    for sec in start..end {
        for tl in &order {
            let Some(i) = tl.grid().index_of(sec) else {
                continue;
            };
            if !tl.live[i] {
                continue;
            }
            let (c, m, p) = (tl.cpu_millicores[i], tl.mem_bytes[i], tl.watts[i]);
            let flags = (c.is_none() as u8 * MISSING_CPU)
                | (m.is_none() as u8 * MISSING_MEM)
                | (p.is_none() as u8 * MISSING_WATTS);
            w.write_record([
                sec.to_string(),
                tl.replica.clone(),
                tl.service.clone(),
                tl.layer.as_str().to_string(),
                cell(c),
                cell(m),
                cell(p),
                flags.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(s: &str, row: usize) -> Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("row {row}: `{s}` is not a number"))
}

/// Reads the aggregated CSV back into timelines. Limits, lifecycle and
/// deployment kind are re-attached from `topology` when given; the grid
/// defaults to the span of the rows.
pub fn read_timelines_csv<R: Read>(
    input: R,
    topology: Option<&Topology>,
    grid: Option<Grid>,
) -> Result<Vec<ResourceTimeline>, String> {
    type Row = (i64, String, String, LayerTag, [Option<f64>; 3]);
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(format!("unexpected header {:?}", headers));
    }
    let mut rows: Vec<Row> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = i + 2;
        let sec: i64 = rec[0]
            .parse()
            .map_err(|_| format!("row {row}: bad second `{}`", &rec[0]))?;
        let layer: LayerTag = rec[3].parse().map_err(|e| format!("row {row}: {e}"))?;
        rows.push((
            sec,
            rec[1].to_string(),
            rec[2].to_string(),
            layer,
            [
                parse_opt(&rec[4], row)?,
                parse_opt(&rec[5], row)?,
                parse_opt(&rec[6], row)?,
            ],
        ));
    }
    let grid = grid.unwrap_or_else(|| {
        let lo = rows.iter().map(|r| r.0).min().unwrap_or(0);
        let hi = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        Grid::new(lo, hi)
    });
    let mut out: BTreeMap<String, ResourceTimeline> = BTreeMap::new();
    for (sec, replica, service, layer, [c, m, p]) in rows {
        let Some(i) = grid.index_of(sec) else {
            continue;
        };
        let tl = out.entry(replica.clone()).or_insert_with(|| {
            let mut tl = ResourceTimeline::empty(replica.clone(), grid);
            tl.service = service;
            tl.layer = layer;
            if let Some(info) = topology.and_then(|t| t.get(&replica)) {
                tl.node = info.node.clone();
                tl.kind = info.kind;
                tl.limits = info.limits.clone();
                tl.lifecycle = info.lifecycle.clone();
            } else if let Some(node) = replica.strip_prefix("node/") {
                tl.node = node.to_string();
            }
            tl
        });
        tl.live[i] = true;
        tl.cpu_millicores[i] = c;
        tl.mem_bytes[i] = m;
        tl.watts[i] = p;
    }
    Ok(out.into_values().collect())
}

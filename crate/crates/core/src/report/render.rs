use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::table::{ColumnMarks, ComparisonTable, Mark, Metric, Stat, ALL_METRICS};
use crate::model::{fmt_fixed, fmt_sig};

pub const CSV_HEADER: [&str; 9] = [
    "workload", "metric", "variant", "n", "mean", "min", "max", "mark", "tie",
];

/// Columns of the human-readable tables.
const SHOWN: [Metric; 12] = [
    Metric::Wr,
    Metric::Ro,
    Metric::Ru,
    Metric::Re,
    Metric::Ac,
    Metric::Tc,
    Metric::Consumed,
    Metric::CostPerKilo,
    Metric::Fr,
    Metric::LatP50,
    Metric::LatP95,
    Metric::Rqs,
];

fn heading(m: Metric) -> &'static str {
    match m {
        Metric::Wr => "WR [J/req]",
        Metric::Ro => "RO [%]",
        Metric::Ru => "RU [%]",
        Metric::Re => "RE [J]",
        Metric::Ac => "AC [J]",
        Metric::Tc => "TC",
        Metric::Consumed => "Consumed",
        Metric::CostPerKilo => "¢/1000",
        Metric::Fr => "FR [%]",
        Metric::LatP50 => "Lat p50 [s]",
        Metric::LatP95 => "Lat p95 [s]",
        Metric::Rqs => "Rqs [1/s]",
        Metric::SutEnergy => "SUT energy [J]",
        Metric::OverheadEnergy => "Overhead energy [J]",
    }
}

/// Unit formatting only: fractions as percent, per-request cost in cents
/// with two decimals, everything else to four significant digits.
pub fn format_value(m: Metric, x: f64) -> String {
    match m {
        Metric::Ro | Metric::Ru | Metric::Fr => fmt_sig(x * 100.0, 3),
        Metric::CostPerKilo => fmt_fixed(x, 2),
        _ => fmt_sig(x, 4),
    }
}

fn format_stat(m: Metric, s: &Stat) -> String {
    let mean = format_value(m, s.mean);
    if s.n > 1 && s.min < s.max {
        format!("{mean} ({} - {})", format_value(m, s.min), format_value(m, s.max))
    } else {
        mean
    }
}

fn cell_text(t: &ComparisonTable, v: &str, w: &str, m: Metric, markdown: bool) -> String {
    let Some(s) = t.get(v, w, m) else {
        return "n/a".into();
    };
    let text = format_stat(m, s);
    match (t.mark_of(v, w, m), markdown) {
        (None, _) => text,
        (Some((mark, tie)), true) => {
            let tie = if tie { " (=)" } else { "" };
            match mark {
                Mark::Best => format!("**{text}**{tie}"),
                Mark::Worst => format!("_{text}_{tie}"),
            }
        }
        (Some((mark, tie)), false) => {
            let tie = if tie { "=" } else { "" };
            match mark {
                Mark::Best => format!("{text} [+{tie}]"),
                Mark::Worst => format!("{text} [-{tie}]"),
            }
        }
    }
}

const LEGEND: &str = "Cells show the mean over repetitions and, when they differ, the lowest and highest value. \
Best values are bold and worst values italic; (=) marks a tie broken by variant name.";

pub fn render_markdown(t: &ComparisonTable, gaps: &[String]) -> String {
    let mut out = String::from("# Comparison\n");
    for w in &t.workloads {
        let _ = write!(out, "\n## {w}\n\n| Variant |");
        for m in SHOWN {
            let _ = write!(out, " {} |", heading(m));
        }
        out.push_str("\n|---|");
        for _ in SHOWN {
            out.push_str("---|");
        }
        out.push('\n');
        for v in &t.variants {
            let _ = write!(out, "| {v} |");
            for m in SHOWN {
                let _ = write!(out, " {} |", cell_text(t, v, w, m, true));
            }
            out.push('\n');
        }
    }
    let _ = write!(out, "\n{LEGEND}\n");
    if !gaps.is_empty() {
        out.push_str("\n## Missing cells\n\n");
        for g in gaps {
            let _ = writeln!(out, "- {g}");
        }
    }
    out
}

pub fn render_text(t: &ComparisonTable, gaps: &[String]) -> String {
    let mut out = String::new();
    for w in &t.workloads {
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("variant".to_string())
            .chain(SHOWN.iter().map(|m| heading(*m).to_string()))
            .collect()];
        for v in &t.variants {
            rows.push(
                std::iter::once(v.clone())
                    .chain(SHOWN.iter().map(|m| cell_text(t, v, w, *m, false)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let _ = writeln!(out, "{w}");
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, wd)| format!("{s:<wd$}", wd = wd))
                .collect();
            let _ = writeln!(out, "  {}", line.join("  ").trim_end());
        }
        out.push('\n');
    }
    out.push_str("[+] best, [-] worst, = tie broken by variant name\n");
    for g in gaps {
        let _ = writeln!(out, "missing: {g}");
    }
    out
}

/// Two workloads per cell, as `first - second`, means only.
pub fn render_merged_markdown(t: &ComparisonTable, first: &str, second: &str) -> String {
    let mut out = format!("# Comparison ({first} - {second})\n\n| Variant |");
    for m in SHOWN {
        let _ = write!(out, " {} |", heading(m));
    }
    out.push_str("\n|---|");
    for _ in SHOWN {
        out.push_str("---|");
    }
    out.push('\n');
    let mean = |v: &str, w: &str, m: Metric| {
        t.get(v, w, m)
            .map(|s| format_value(m, s.mean))
            .unwrap_or_else(|| "n/a".into())
    };
    for v in &t.variants {
        let _ = write!(out, "| {v} |");
        for m in SHOWN {
            let _ = write!(out, " {} - {} |", mean(v, first, m), mean(v, second, m));
        }
        out.push('\n');
    }
    out
}

/// Long format, one row per (workload, metric, variant), lossless numbers.
pub fn render_csv(t: &ComparisonTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for wl in &t.workloads {
        for m in ALL_METRICS {
            for v in &t.variants {
                let s = t.get(v, wl, m);
                let num = |f: fn(&Stat) -> f64| s.map(|s| f(s).to_string()).unwrap_or_default();
                let (mark, tie) = t
                    .mark_of(v, wl, m)
                    .map(|(k, tie)| (k.as_str(), if tie { "tie" } else { "" }))
                    .unwrap_or(("", ""));
                w.write_record([
                    wl.as_str(),
                    m.key(),
                    v.as_str(),
                    &s.map_or(0, |s| s.n).to_string(),
                    &num(|s| s.mean),
                    &num(|s| s.min),
                    &num(|s| s.max),
                    mark,
                    tie,
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_csv(text: &str) -> Result<ComparisonTable, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format!("unexpected header {headers:?}"));
    }
    let mut t = ComparisonTable::default();
    let mut partial: BTreeMap<(String, Metric), (Option<String>, bool, Option<String>, bool)> =
        BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("row {}: {e}", i + 2))?;
        let bad = |what: &str| format!("row {}: bad {what}", i + 2);
        let (w, v) = (rec[0].to_string(), rec[2].to_string());
        let m: Metric = rec[1].parse()?;
        if !t.workloads.contains(&w) {
            t.workloads.push(w.clone());
        }
        if !t.variants.contains(&v) {
            t.variants.push(v.clone());
        }
        let n: u32 = rec[3].parse().map_err(|_| bad("n"))?;
        if n > 0 {
            let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(CSV_HEADER[k]));
            t.cells.insert(
                (v.clone(), w.clone(), m),
                Stat {
                    n,
                    mean: f(4)?,
                    min: f(5)?,
                    max: f(6)?,
                },
            );
        }
        let tie = &rec[8] == "tie";
        let e = partial.entry((w, m)).or_default();
        match &rec[7] {
            "best" => (e.0, e.1) = (Some(v), tie),
            "worst" => (e.2, e.3) = (Some(v), tie),
            "" => {}
            other => return Err(format!("row {}: unknown mark `{other}`", i + 2)),
        }
    }
    for (k, (best, best_tie, worst, worst_tie)) in partial {
        match (best, worst) {
            (Some(best), Some(worst)) => {
                t.marks.insert(
                    k,
                    ColumnMarks {
                        best,
                        worst,
                        best_tie,
                        worst_tie,
                    },
                );
            }
            (None, None) => {}
            _ => return Err(format!("column {}/{} has only one mark", k.0, k.1)),
        }
    }
    Ok(t)
}

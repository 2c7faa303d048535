//! Comparison tables, plots and the reproduction manifest of a run.
//!
//! Every number shown is a [`MetricsReport`] field or its mean, minimum or
//! maximum over repetitions.

mod manifest;
mod plots;
mod render;
mod table;

pub use manifest::{build_manifest, verify_manifest, Manifest, MANIFEST_FILE};
pub use plots::{energy_chart, wr_chart};
pub use render::{
    format_value, parse_csv, render_csv, render_markdown, render_merged_markdown, render_text,
    CSV_HEADER,
};
pub use table::{
    CellReport, ColumnMarks, ComparisonTable, Mark, Metric, Stat, ALL_METRICS,
};

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::collectors::{read_trace, TRACE_HEADER};
use crate::model::{MeasurementSample, MetricsReport};
use crate::runner::{load_run, CellId, CUSTOM_FILE};

pub const COMPARISON_MD: &str = "comparison.md";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Run(String),
    #[error("no cell of the run has metrics")]
    Empty,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |e| ReportError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Per-cell reports of a run, the comparison built from them and the
/// cells that have no report.
#[derive(Clone, Debug)]
pub struct CompiledReport {
    pub cells: Vec<CellReport>,
    pub gaps: Vec<String>,
    pub table: ComparisonTable,
    /// Custom-kind samples by cell, passed through without aggregation.
    pub custom: Vec<(String, MeasurementSample)>,
}

/// Reads the selected `metrics.json` of every cell of the run in `run_dir`.
pub fn compile_report(run_dir: &Path) -> Result<CompiledReport, ReportError> {
    let (plan, _) = load_run(run_dir).map_err(|e| ReportError::Run(e.to_string()))?;
    let mut cells = Vec::new();
    let mut gaps = Vec::new();
    let mut custom = Vec::new();
    for v in &plan.variants {
        for w in &plan.workloads {
            for rep in 1..=plan.repetitions {
                let id = CellId::new(&v.name, &w.name, rep);
                let path = run_dir.join(id.dir()).join("metrics.json");
                match fs::read_to_string(&path) {
                    Ok(text) => {
                        let report = MetricsReport::from_json(&text).map_err(|e| ReportError::Io {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                        cells.push(CellReport {
                            variant: v.name.clone(),
                            workload: w.name.clone(),
                            repetition: rep,
                            report,
                        });
                    }
                    Err(_) => {
                        gaps.push(format!("{id}: no completed attempt"));
                        continue;
                    }
                }
                let path = run_dir.join(id.dir()).join(CUSTOM_FILE);
                if let Ok(file) = fs::File::open(&path) {
                    let (samples, _) = read_trace(file).map_err(|message| ReportError::Io {
                        path: path.clone(),
                        message,
                    })?;
                    custom.extend(samples.into_iter().map(|s| (id.to_string(), s)));
                }
            }
        }
    }
    let variants: Vec<String> = plan.variants.iter().map(|v| v.name.clone()).collect();
    let workloads: Vec<String> = plan.workloads.iter().map(|w| w.name.clone()).collect();
    let table = ComparisonTable::build(&variants, &workloads, &cells);
    Ok(CompiledReport {
        cells,
        gaps,
        table,
        custom,
    })
}

fn render_custom(rows: &[(String, MeasurementSample)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("cell").chain(TRACE_HEADER.iter().copied());
    w.write_record(header).expect("in-memory write");
    for (cell, s) in rows {
        w.write_record([
            cell.clone(),
            s.timestamp.to_string(),
            s.layer.to_string(),
            s.source.clone(),
            s.node.clone(),
            s.pod.clone().unwrap_or_default(),
            s.kind.to_string(),
            s.value.to_string(),
            s.unit.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Compiles the report and writes the comparison files, plots and
/// manifest into `run_dir`.
pub fn compile_run(run_dir: &Path) -> Result<CompiledReport, ReportError> {
    let compiled = compile_report(run_dir)?;
    let write = |name: &str, text: String| {
        let p = run_dir.join(name);
        fs::write(&p, text).map_err(io(&p))
    };
    let mut md = render_markdown(&compiled.table, &compiled.gaps);
    if !compiled.custom.is_empty() {
        md.push_str(&format!(
            "\nCustom metrics: {} samples, listed unaggregated in {CUSTOM_FILE}.\n",
            compiled.custom.len()
        ));
        write(CUSTOM_FILE, render_custom(&compiled.custom))?;
    }
    write(COMPARISON_MD, md)?;
    write(COMPARISON_CSV, render_csv(&compiled.table))?;
    write(COMPARISON_TXT, render_text(&compiled.table, &compiled.gaps))?;
    let plots = run_dir.join(PLOTS_DIR);
    fs::create_dir_all(&plots).map_err(io(&plots))?;
    for w in &compiled.table.workloads {
        write(&format!("{PLOTS_DIR}/wr_{w}.svg"), wr_chart(&compiled.table, w))?;
        write(&format!("{PLOTS_DIR}/energy_{w}.svg"), energy_chart(&compiled.table, w))?;
    }
    let manifest = build_manifest(run_dir)?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(MANIFEST_FILE, text)?;
    Ok(compiled)
}

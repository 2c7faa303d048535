use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ReportError;
use crate::collectors::CollectorConfig;
use crate::runner::{
    cell_seed, load_run, read_transitions, replay, CellHistory, CellId, RunInfo, PLAN_SNAPSHOT,
    STATE_FILE,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-execute a run and to check its artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_versions: BTreeMap<String, String>,
    pub run: RunInfo,
    /// The plan as executed.
    pub plan: String,
    pub collectors: Vec<CollectorConfig>,
    /// Seed of every cell.
    pub seeds: BTreeMap<String, u64>,
    /// Patched descriptor of every attempt, by path.
    pub descriptors: BTreeMap<String, String>,
    /// SHA-256 of every file in the run directory except this manifest.
    pub artifacts: BTreeMap<String, String>,
    /// Attempt history per cell.
    pub cells: BTreeMap<String, CellHistory>,
    /// Attempt whose results the comparison uses, per completed cell.
    pub selected: BTreeMap<String, u32>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            walk(root, &path, out)?;
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .expect("below root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if rel != MANIFEST_FILE {
            out.insert(rel, sha256_file(&path)?);
        }
    }
    Ok(())
}

pub fn build_manifest(run_dir: &Path) -> Result<Manifest, ReportError> {
    let err = |e: &dyn std::fmt::Display| ReportError::Run(e.to_string());
    let (plan, run) = load_run(run_dir).map_err(|e| err(&e))?;
    let plan_text = fs::read_to_string(run_dir.join(PLAN_SNAPSHOT)).map_err(|e| err(&e))?;
    let histories = replay(&read_transitions(&run_dir.join(STATE_FILE)).map_err(|e| err(&e))?)
        .map_err(|e| err(&e))?;
    let mut artifacts = BTreeMap::new();
    walk(run_dir, run_dir, &mut artifacts).map_err(|e| err(&e))?;
    let descriptors = artifacts
        .iter()
        .filter(|(k, _)| {
            k.rsplit('/')
                .next()
                .is_some_and(|f| f.starts_with("descriptor."))
        })
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut seeds = BTreeMap::new();
    let mut selected = BTreeMap::new();
    for v in &plan.variants {
        for w in &plan.workloads {
            let wl = plan.workload_for(v, w);
            for rep in 1..=plan.repetitions {
                let id = CellId::new(&v.name, &w.name, rep);
                seeds.insert(id.to_string(), cell_seed(&wl.name, wl.seed, rep));
                if let Some(a) = histories.get(&id).and_then(CellHistory::done_attempt) {
                    selected.insert(id.to_string(), a);
                }
            }
        }
    }
    Ok(Manifest {
        tool_versions: BTreeMap::from([(
            "wattlab".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]),
        run,
        plan: plan_text,
        collectors: plan.collectors.clone(),
        seeds,
        descriptors,
        artifacts,
        cells: histories
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        selected,
    })
}

/// Checks that every file listed in the manifest exists with its digest
/// and that every cell of the plan has a selected attempt.
pub fn verify_manifest(run_dir: &Path) -> Result<Manifest, String> {
    let text = fs::read_to_string(run_dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    for (rel, digest) in &m.artifacts {
        let actual = sha256_file(&run_dir.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        if &actual != digest {
            return Err(format!("{rel}: digest mismatch"));
        }
    }
    for cell in m.seeds.keys() {
        if !m.selected.contains_key(cell) {
            return Err(format!("{cell}: no completed attempt"));
        }
    }
    Ok(m)
}

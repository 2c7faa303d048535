#![allow(dead_code)]

use std::path::{Path, PathBuf};

use wattlab::model::load_plan;
use wattlab::ExperimentPlan;

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo")
}

pub const SIM_COLLECTOR: &str = r#"
[[collectors]]
id = "sim"
backend = "simulator"
poll_interval = 5
queries = [
  { query = "replica_energy", layer = "application", kind = "energy_joules" },
  { query = "replica_cpu", layer = "application", kind = "cpu_millicores" },
  { query = "replica_mem", layer = "application", kind = "mem_bytes" },
  { query = "node_watts", layer = "physical", kind = "watts" },
]
"#;

pub fn variant(name: &str) -> String {
    format!(
        "\n[[variants]]\nname = \"{name}\"\nsource = {{ path = \".\" }}\ndeployment_descriptor = \"{name}.toml\"\n"
    )
}

pub fn stress(duration: u64, peak: u32, seed: u64) -> String {
    format!("\n[[workloads]]\nshape = \"stress\"\nduration = {duration}\npeak_users = {peak}\nseed = {seed}\n")
}

pub fn pausing(duration: u64, seed: u64) -> String {
    format!("\n[[workloads]]\nshape = \"pausing\"\nduration = {duration}\nseed = {seed}\n")
}

/// Writes `plan.toml` with the given sections into `dir`, next to copies of
/// the demo topologies, and loads it.
pub fn write_plan(dir: &Path, header: &str, sections: &[String]) -> (PathBuf, ExperimentPlan) {
    for entry in std::fs::read_dir(demo_dir()).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap();
        if name != "plan.toml" {
            std::fs::copy(&p, dir.join(name)).unwrap();
        }
    }
    let mut text = format!("output_dir = \"runs\"\n{header}\n");
    for s in sections {
        text.push_str(s);
    }
    let path = dir.join("plan.toml");
    std::fs::write(&path, text).unwrap();
    let plan = load_plan(&path).unwrap();
    (path, plan)
}

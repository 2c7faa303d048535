//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use common::{demo_dir, pausing, stress, variant, write_plan, SIM_COLLECTOR};
use wattlab::aggregator::{attribute_energy, Grid, ResourceTimeline, SutSelector};
use wattlab::metrics::{
    request_consumption, resource_utilization, runtime_overhead, scaling_waste, total_cost,
    CostBook, FnInvocation, OverProvisionRule,
};
use wattlab::model::{default_infrastructure_prefixes, DocFormat, WorkloadShape};
use wattlab::report::{
    render_markdown, verify_manifest, CellReport, ComparisonTable, Mark, Metric, COMPARISON_CSV,
    COMPARISON_MD,
};
use wattlab::runner::{
    execute_plan, read_transitions, Phase, SimDriver, CRASH_ENV, GROUND_TRUTH_FILE, STATE_FILE,
};
use wattlab::simulator::{run_sim, Cluster, GroundTruth, SimTopology, SimTrace, SIM_EPOCH};
use wattlab::workloads::{build_schedule, drive_virtual, Scenario};
use wattlab::{MetricsReport, ResourceSpec, WorkloadSpec};

const GB: u64 = 1 << 30;
const MB: u64 = 1 << 20;

type Check = Result<String, String>;

/// State shared between criteria.
#[derive(Default)]
struct Context {
    scratch: Option<tempfile::TempDir>,
    /// Directory of the end-to-end run, once it completed.
    e2e_run: Option<PathBuf>,
    e2e_plan: Option<PathBuf>,
    /// Simulator runs whose TC and consumed cost were compared.
    cost_runs: usize,
    cost_violations: Vec<String>,
}

impl Context {
    fn scratch(&mut self) -> PathBuf {
        self.scratch
            .get_or_insert_with(|| tempfile::tempdir().expect("temp dir"))
            .path()
            .to_path_buf()
    }
}

fn wattlab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wattlab"));
    c.env_remove(CRASH_ENV);
    c
}

fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        (actual - expected).abs() / expected.abs()
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. metric oracles on random simulator traces

fn random_topology(rng: &mut ChaCha8Rng) -> serde_json::Value {
    let mut nodes = serde_json::Map::new();
    let n_nodes = rng.gen_range(1..=3);
    for k in 0..n_nodes {
        let p_idle: f64 = rng.gen_range(20.0..60.0);
        nodes.insert(
            format!("n{k}"),
            json!({
                "cpu_capacity": rng.gen_range(4..=16) * 1000,
                "mem_capacity": 32 * GB,
                "p_idle": p_idle,
                "p_max": p_idle + rng.gen_range(20.0..120.0),
            }),
        );
    }
    let mut services = serde_json::Map::new();
    let n_app = rng.gen_range(1..=4);
    let mesh = rng.gen_bool(0.4);
    for i in 0..n_app {
        let function = i > 0 && rng.gen_bool(0.2);
        let cpu_limit = rng.gen_range(2..=20) * 100;
        let mem_limit = rng.gen_range(1..=8) * 256 * MB;
        let replicas_min = if function { 0 } else { rng.gen_range(1..=3) };
        let mut calls: Vec<String> = ((i + 1)..n_app)
            .filter(|_| rng.gen_bool(0.4))
            .map(|j| format!("s{j}"))
            .collect();
        if i == 0 && mesh {
            calls.push("mesh".into());
        }
        let mut s = json!({
            "namespace": "app",
            "kind": if function { "function" } else { "pod" },
            "per_request_cpu_ms": rng.gen_range(0.5..(cpu_limit as f64).min(40.0)),
            "service_time": rng.gen_range(0.005..0.2),
            "mem_floor": (mem_limit as f64 * rng.gen_range(0.05..0.5)) as u64,
            "mem_per_request": rng.gen_range(0..2 * MB),
            "idle_cpu": rng.gen_range(0.0..30.0),
            "resources": {
                "cpu_limit": cpu_limit,
                "mem_limit": mem_limit,
                "replicas_min": replicas_min,
                "replicas_max": replicas_min.max(1) + rng.gen_range(0..=2),
            },
            "startup": rng.gen_range(0..=3),
            "cold_start": rng.gen_range(0.0..2.0),
            "calls": calls,
        });
        if i == 0 {
            s["routes"] = json!(["/"]);
        }
        if !function && rng.gen_bool(0.5) {
            s["autoscaler"] = json!({
                "target_cpu_fraction": rng.gen_range(0.3..0.9),
                "scale_up_delay": rng.gen_range(2..=20),
                "scale_down_delay": rng.gen_range(5..=30),
            });
        }
        if rng.gen_bool(0.3) {
            s["node"] = json!(format!("n{}", rng.gen_range(0..n_nodes)));
        }
        services.insert(format!("s{i}"), s);
    }
    if mesh {
        services.insert(
            "mesh".into(),
            json!({
                "namespace": "istio-system",
                "layer": "platform",
                "per_request_cpu_ms": rng.gen_range(0.1..3.0),
                "idle_cpu": rng.gen_range(0.0..40.0),
                "resources": { "cpu_limit": 1000, "mem_limit": 256 * MB },
            }),
        );
    }
    services.insert(
        "coredns".into(),
        json!({
            "namespace": "kube-system",
            "layer": "platform",
            "idle_cpu": rng.gen_range(0.0..30.0),
            "resources": { "cpu_limit": 100, "mem_limit": 128 * MB },
        }),
    );
    json!({ "nodes": nodes, "services": services })
}

fn random_workload(rng: &mut ChaCha8Rng, seed: u64) -> WorkloadSpec {
    let shape = [
        WorkloadShape::Stress,
        WorkloadShape::Fixed,
        WorkloadShape::Pausing,
        WorkloadShape::Shaped,
    ][rng.gen_range(0..4)];
    WorkloadSpec {
        name: shape.as_str().into(),
        shape,
        duration: rng.gen_range(20..=60),
        peak_users: rng.gen_range(1..=100),
        fixed_request_count: (shape == WorkloadShape::Fixed).then(|| rng.gen_range(50..=2000)),
        seed,
        think_time: rng.gen_range(0.0..1.0),
        ramp_exclusion: 0,
    }
}

/// Straight per-second scans over the simulator's raw replica records.
struct Oracle {
    wr: Option<f64>,
    ro: Option<f64>,
    ru: Option<f64>,
    re: f64,
}

fn oracle(trace: &SimTrace, ok_requests: usize, sel: &SutSelector, rule: &OverProvisionRule) -> Oracle {
    let mut replicas: Vec<_> = trace.replicas.iter().collect();
    replicas.sort_by(|a, b| a.id.cmp(&b.id));
    let is_sut = |r: &&&wattlab::simulator::ReplicaTrace| sel.matches(&r.id, &r.service, r.layer);
    let (mut sut, mut ovh, mut re) = (0.0, 0.0, 0.0);
    let (mut ru_sum, mut ru_n) = (0.0, 0usize);
    for s in trace.start..trace.end {
        let (mut cu, mut cl, mut mu, mut ml) = (0.0, 0.0, 0.0, 0.0);
        for r in &replicas {
            let Some(w) = r.watts_at(s) else { continue };
            if is_sut(&r) {
                sut += w;
            } else if r.layer.is_overhead() || sel.is_infrastructure(&r.id, &r.service) {
                ovh += w;
            }
        }
        for r in replicas.iter().filter(is_sut) {
            let (Some(c), Some(m), Some(l)) = (r.cpu_at(s), r.mem_at(s), r.limits.as_ref()) else {
                continue;
            };
            cu += c;
            cl += l.cpu_limit;
            mu += m;
            ml += l.mem_limit as f64;
            let under = c / l.cpu_limit < rule.cpu_threshold
                && m / (l.mem_limit as f64) < rule.mem_threshold;
            let peer = !rule.require_peer_headroom
                || replicas.iter().filter(is_sut).any(|p| {
                    p.id != r.id
                        && p.service == r.service
                        && match (p.cpu_at(s), p.mem_at(s), p.limits.as_ref()) {
                            (Some(pc), Some(pm), Some(pl)) => {
                                pl.cpu_limit - pc >= c && pl.mem_limit as f64 - pm >= m
                            }
                            _ => false,
                        }
                });
            if under && peer {
                re += r.watts_at(s).unwrap_or(0.0);
            }
        }
        if cl > 0.0 {
            ru_sum += (cu / cl + mu / ml) / 2.0;
            ru_n += 1;
        }
    }
    Oracle {
        wr: (ok_requests > 0).then(|| sut / ok_requests as f64),
        ro: (sut + ovh > 0.0).then(|| ovh / (sut + ovh)),
        ru: (ru_n > 0).then(|| ru_sum / ru_n as f64),
        re,
    }
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => rel_err(a, b) <= tol,
        _ => false,
    }
}

struct TraceOutcome {
    waste: bool,
    mismatch: Option<String>,
    tc_violation: Option<String>,
}

fn check_trace(seed: u64) -> Result<TraceOutcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = SimTopology::from_value(random_topology(&mut rng))
        .map_err(|e| format!("seed {seed}: generated topology rejected: {e}"))?;
    let spec = random_workload(&mut rng, seed);
    let schedule = build_schedule(&spec).map_err(|e| e.to_string())?;
    let rule = OverProvisionRule {
        cpu_threshold: rng.gen_range(0.1..0.9),
        mem_threshold: rng.gen_range(0.1..0.9),
        require_peer_headroom: rng.gen_bool(0.7),
    };
    let (trace, drive) = run_sim(&topo, &schedule, &Scenario::default(), seed, rng.gen_range(0..5));
    let grid = Grid::new(trace.start, trace.end);
    let timelines = trace.timelines(grid);
    let sel = SutSelector::new(Vec::new(), default_infrastructure_prefixes());
    let sut: Vec<ResourceTimeline> = timelines
        .iter()
        .filter(|t| !t.is_node() && sel.matches(&t.replica, &t.service, t.layer))
        .cloned()
        .collect();
    let ledger = attribute_energy(&timelines, &sel).map_err(|e| e.to_string())?;
    let wr = request_consumption(&ledger, &drive.records).ok();
    let ro = runtime_overhead(&ledger).ok();
    let ru = resource_utilization(&sut, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let re = scaling_waste(&sut, &rule);

    let ok = drive.records.iter().filter(|r| r.success).count();
    let o = oracle(&trace, ok, &sel, &rule);
    let mismatch = if re != o.re {
        Some(format!("seed {seed}: RE {re} != oracle {}", o.re))
    } else if !close(ru, o.ru, 1e-12) {
        Some(format!("seed {seed}: RU {ru:?} vs oracle {:?}", o.ru))
    } else if !close(ro, o.ro, 1e-12) {
        Some(format!("seed {seed}: RO {ro:?} vs oracle {:?}", o.ro))
    } else if !close(wr, o.wr, 1e-12) {
        Some(format!("seed {seed}: WR {wr:?} vs oracle {:?}", o.wr))
    } else {
        None
    };

    let invocations: Vec<FnInvocation> = trace.invocations.iter().map(|i| i.to_invocation()).collect();
    let costs = total_cost(&sut, &invocations, &CostBook::default(), &BTreeMap::new())
        .map_err(|e| e.to_string())?;
    let tc_violation = (costs.tc < costs.consumed)
        .then(|| format!("seed {seed}: TC {} < consumed {}", costs.tc, costs.consumed));
    Ok(TraceOutcome {
        waste: re > 0.0,
        mismatch,
        tc_violation,
    })
}

fn metric_oracles(ctx: &mut Context) -> Check {
    const TRACES: u64 = 1000;
    let start = Instant::now();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16) as u64;
    let results: Vec<Result<TraceOutcome, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (0..TRACES)
                        .filter(|seed| seed % workers == w)
                        .map(check_trace)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    let elapsed = start.elapsed();
    let mut mismatches = Vec::new();
    let mut with_waste = 0;
    for r in results {
        let r = r?;
        with_waste += usize::from(r.waste);
        mismatches.extend(r.mismatch);
        ctx.cost_runs += 1;
        ctx.cost_violations.extend(r.tc_violation);
    }
    ensure(mismatches.is_empty(), || {
        format!("{} of {TRACES} traces disagree, first: {}", mismatches.len(), mismatches[0])
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:.1?}, limit 60 s"))?;
    Ok(format!(
        "{TRACES} traces ({with_waste} with waste), RE exact, RU/RO/WR within 1e-12, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 2. end-to-end fidelity, 3. determinism

fn e2e_plan(dir: &Path) -> PathBuf {
    write_plan(
        dir,
        "settle = 10\nrepetitions = 2",
        &[
            SIM_COLLECTOR.into(),
            variant("monolith"),
            variant("microservices"),
            stress(120, 80, 21),
            pausing(120, 22),
        ],
    )
    .0
}

fn run_cli(plan: &Path, out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let o = wattlab()
        .arg("run")
        .arg(plan)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(o.status.code() == Some(0), || {
        format!(
            "exit {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        )
    })?;
    Ok(elapsed)
}

fn pipeline_fidelity(ctx: &mut Context) -> Check {
    let dir = ctx.scratch().join("e2e");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let plan = e2e_plan(&dir);
    let run = dir.join("run-a");
    let elapsed = run_cli(&plan, &run)?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}, limit 120 s"))?;
    let manifest = verify_manifest(&run)?;
    ensure(manifest.selected.len() == 8, || format!("{} cells completed", manifest.selected.len()))?;
    let mut worst: (f64, String) = (0.0, String::new());
    for (cell, attempt) in &manifest.selected {
        let report = MetricsReport::from_json(
            &fs::read_to_string(run.join(cell).join("metrics.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let gt: GroundTruth = serde_json::from_str(
            &fs::read_to_string(run.join(cell).join(format!("attempt-{attempt}")).join(GROUND_TRUTH_FILE))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let pairs = [
            ("WR", report.wr, gt.wr),
            ("RO", report.ro, gt.ro),
            ("RU", report.ru, gt.ru),
            ("RE", Some(report.re), Some(gt.waste_joules)),
        ];
        for (name, got, want) in pairs {
            let (Some(got), Some(want)) = (got, want) else {
                return Err(format!("{cell}: {name} is {got:?}, ground truth {want:?}"));
            };
            let err = if want == 0.0 && got.abs() <= 1e-9 { 0.0 } else { rel_err(got, want) };
            ensure(err <= 0.02, || format!("{cell}: {name} {got} vs ground truth {want}"))?;
            if err >= worst.0 {
                worst = (err, format!("{cell} {name}"));
            }
        }
        ctx.cost_runs += 1;
        if report.tc < report.consumed_cost {
            ctx.cost_violations
                .push(format!("{cell}: TC {} < consumed {}", report.tc, report.consumed_cost));
        }
    }
    ctx.e2e_run = Some(run);
    ctx.e2e_plan = Some(plan);
    Ok(format!(
        "2x2x2 cells in {:.1} s, largest deviation {:.2e} ({})",
        elapsed.as_secs_f64(),
        worst.0,
        worst.1
    ))
}

fn files_named(root: &Path, name: &str, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(root) else { return };
    let mut entries: Vec<_> = entries.flatten().map(|e| e.path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_named(&p, name, out);
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
}

fn determinism(ctx: &mut Context) -> Check {
    let (Some(a), Some(plan)) = (ctx.e2e_run.clone(), ctx.e2e_plan.clone()) else {
        return Err("needs the end-to-end run".into());
    };
    let b = a.with_file_name("run-b");
    run_cli(&plan, &b)?;
    let mut files = Vec::new();
    files_named(&a, "metrics.json", &mut files);
    let mut compared = 0;
    let rel: Vec<PathBuf> = files
        .iter()
        .map(|p| p.strip_prefix(&a).expect("below run").to_path_buf())
        .chain([PathBuf::from(COMPARISON_CSV), PathBuf::from(COMPARISON_MD)])
        .collect();
    for r in &rel {
        let x = fs::read(a.join(r)).map_err(|e| format!("{}: {e}", r.display()))?;
        let y = fs::read(b.join(r)).map_err(|e| format!("{}: {e}", r.display()))?;
        ensure(x == y, || format!("{} differs between runs", r.display()))?;
        compared += 1;
    }
    Ok(format!("{compared} files byte-identical across two runs"))
}

// ---------------------------------------------------------------------------
// 4. workload contracts

fn workload(shape: WorkloadShape, duration: u64, peak: u32) -> WorkloadSpec {
    WorkloadSpec {
        name: shape.as_str().into(),
        shape,
        duration,
        peak_users: peak,
        fixed_request_count: (shape == WorkloadShape::Fixed).then_some(1000),
        seed: 4,
        think_time: 0.1,
        ramp_exclusion: 0,
    }
}

fn local_maxima(v: &[u32]) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        if (i == 0 || v[i - 1] < v[i]) && (j + 1 == v.len() || v[j + 1] < v[i]) {
            out.push((v[i], (i + j) / 2));
        }
        i = j + 1;
    }
    out
}

fn workload_contracts(_: &mut Context) -> Check {
    let text = fs::read_to_string(demo_dir().join("monolith.toml")).map_err(|e| e.to_string())?;
    let topo = SimTopology::from_value(DocFormat::Toml.parse(&text)?).map_err(|e| e.to_string())?;

    let fixed = build_schedule(&workload(WorkloadShape::Fixed, 600, 10)).map_err(|e| e.to_string())?;
    let mut cluster = Cluster::new(topo.clone(), 1, SIM_EPOCH);
    let start = cluster.now();
    let drive = drive_virtual(&fixed, &mut cluster, &Scenario::default(), start);
    ensure(drive.records.len() == 1000, || format!("fixed(1000) issued {}", drive.records.len()))?;

    let st = build_schedule(&workload(WorkloadShape::Stress, 120, 50)).map_err(|e| e.to_string())?;
    ensure(st.target_users.last() == Some(&50), || {
        format!("stress ends at {:?} users", st.target_users.last())
    })?;
    ensure(st.target_users[0] == 0, || "stress does not start at zero".into())?;
    for (k, u) in st.target_users.iter().enumerate() {
        let ideal = 50.0 * k as f64 / 119.0;
        ensure((*u as f64 - ideal).abs() <= 0.5 + 1e-9, || format!("stress second {k}: {u} users, ramp {ideal:.2}"))?;
    }
    let mut cluster = Cluster::new(topo, 1, SIM_EPOCH);
    let start = cluster.now();
    let driven = drive_virtual(&st, &mut cluster, &Scenario::default(), start);
    ensure(driven.active_users.get(119) == Some(&50), || {
        format!("stress drove {:?} users in its last second", driven.active_users.get(119))
    })?;

    let mut shaped_at = Vec::new();
    for duration in [600u64, 3600, 86_400] {
        let sh = build_schedule(&workload(WorkloadShape::Shaped, duration, 200)).map_err(|e| e.to_string())?;
        let mut m = local_maxima(&sh.target_users);
        m.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut top: Vec<f64> = m.iter().take(2).map(|x| x.1 as f64 / duration as f64).collect();
        top.sort_by(f64::total_cmp);
        ensure(top.len() == 2 && (top[0] - 0.375).abs() <= 0.02 && (top[1] - 0.708).abs() <= 0.02, || {
            format!("shaped({duration}) maxima at {top:?}")
        })?;
        shaped_at.push(format!("{:.3}/{:.3}", top[0], top[1]));
    }

    let p = build_schedule(&workload(WorkloadShape::Pausing, 120, 25)).map_err(|e| e.to_string())?;
    for k in 0..40 {
        ensure(p.think.gap(k + 1) == 2.0 * p.think.gap(k), || format!("pausing gap {k} does not double"))?;
    }
    Ok(format!(
        "fixed issued 1000, stress ends at 50/50 users, shaped maxima at {}, pausing gaps double",
        shaped_at.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 5. scaling waste fixture

fn replica(name: &str, service: &str, cpu: f64, mem: f64, watts: Option<f64>, secs: usize) -> ResourceTimeline {
    let mut t = ResourceTimeline::empty(name, Grid::new(0, secs as i64));
    t.service = service.into();
    t.limits = Some(ResourceSpec::new(1000.0, GB));
    t.live = vec![true; secs];
    t.cpu_millicores = vec![Some(cpu * 1000.0); secs];
    t.mem_bytes = vec![Some(mem * GB as f64); secs];
    t.watts = vec![watts; secs];
    t
}

fn threshold(t: f64) -> OverProvisionRule {
    OverProvisionRule {
        cpu_threshold: t,
        mem_threshold: t,
        require_peer_headroom: true,
    }
}

fn scaling_waste_fixture(_: &mut Context) -> Check {
    let rule = OverProvisionRule::default();
    // the peer's own power is not part of the example
    let pair = [
        replica("web-0", "web", 0.10, 0.10, Some(4.0), 100),
        replica("web-1", "web", 0.30, 0.30, None, 100),
    ];
    let re = scaling_waste(&pair, &rule);
    ensure(re == 400.0, || format!("two-replica example gives {re} J"))?;
    let single = scaling_waste(&pair[..1], &rule);
    ensure(single == 0.0, || format!("single replica gives {single} J"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let secs = 60;
        let tls: Vec<ResourceTimeline> = (0..rng.gen_range(2..=6))
            .map(|i| {
                let mut t = replica(&format!("r{i}"), ["a", "b"][i % 2], 0.0, 0.0, None, secs);
                for s in 0..secs {
                    t.cpu_millicores[s] = Some(rng.gen_range(0.0..1000.0));
                    t.mem_bytes[s] = Some(rng.gen_range(0.0..GB as f64));
                    t.watts[s] = Some(rng.gen_range(0.5..20.0));
                    t.live[s] = rng.gen_bool(0.9);
                }
                t
            })
            .collect();
        let mut last = 0.0;
        for step in 1..=20 {
            let re = scaling_waste(&tls, &threshold(step as f64 * 0.0475));
            ensure(re >= last, || format!("case {case}: RE fell from {last} to {re} at step {step}"))?;
            last = re;
        }
        let base = OverProvisionRule {
            cpu_threshold: rng.gen_range(0.05..0.9),
            mem_threshold: rng.gen_range(0.05..0.9),
            require_peer_headroom: rng.gen_bool(0.5),
        };
        let raised = OverProvisionRule {
            cpu_threshold: rng.gen_range(base.cpu_threshold..0.95),
            mem_threshold: rng.gen_range(base.mem_threshold..0.95),
            ..base.clone()
        };
        let (lo, hi) = (scaling_waste(&tls, &base), scaling_waste(&tls, &raised));
        ensure(hi >= lo, || format!("case {case}: raising thresholds lowered RE {lo} to {hi}"))?;
    }
    Ok("two replicas 400 J, single replica 0 J, 50 sweeps monotone".into())
}

// ---------------------------------------------------------------------------
// 6. cost book

fn cost_fixture(ctx: &mut Context) -> Check {
    let book = CostBook {
        pod_cpu_price: Some(0.000011244),
        pod_mem_price: Some(0.000001235),
        fn_invocation_price: Some(0.0000002),
        fn_gbs_price: Some(0.0000166667),
        currency: "USD".into(),
    };
    let mut pod = ResourceTimeline::empty("app/pod-0", Grid::new(0, 900));
    pod.service = "app".into();
    pod.limits = Some(ResourceSpec::new(2000.0, 3 * GB));
    pod.live = vec![true; 900];
    pod.cpu_millicores = vec![Some(700.0); 900];
    pod.mem_bytes = vec![Some(GB as f64); 900];
    let c = total_cost(std::slice::from_ref(&pod), &[], &book, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let (pc, pm) = (book.pod_cpu_price.unwrap(), book.pod_mem_price.unwrap());
    let want = 900.0 * (2.0 * pc + 3.0 * pm);
    ensure((c.tc - want).abs() <= 1e-9, || format!("pod TC {} vs {want}", c.tc))?;

    let inv: Vec<FnInvocation> = (0..10_000)
        .map(|_| FnInvocation {
            service: "fn".into(),
            duration: 0.2,
            mem_bytes: 500 * MB,
        })
        .collect();
    let f = total_cost(&[], &inv, &book, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let want = 10_000.0 * book.fn_invocation_price.unwrap()
        + 10_000.0 * 0.2 * 0.48828125 * book.fn_gbs_price.unwrap();
    ensure((f.tc - want).abs() <= 1e-9, || format!("function cost {} vs {want}", f.tc))?;

    ensure(ctx.cost_runs > 0, || "no simulator runs to check".into())?;
    ensure(ctx.cost_violations.is_empty(), || ctx.cost_violations[0].clone())?;
    Ok(format!("pod and function fixtures exact, TC ≥ consumed on {} simulator runs", ctx.cost_runs))
}

// ---------------------------------------------------------------------------
// 7. ranking fixture

fn ranking_fixture(_: &mut Context) -> Check {
    let variants: Vec<String> = ["microservices", "monolith", "serverless"].map(String::from).to_vec();
    let workloads = vec!["pausing".to_string()];
    let values = [("microservices", 0.035, 0.58), ("monolith", 0.0089, 0.16), ("serverless", 0.051, 4.09)];
    let cells: Vec<CellReport> = values
        .iter()
        .map(|(v, fr, tc)| CellReport {
            variant: v.to_string(),
            workload: "pausing".into(),
            repetition: 1,
            report: MetricsReport {
                fr: Some(*fr),
                tc: *tc,
                ..Default::default()
            },
        })
        .collect();
    let t = ComparisonTable::build(&variants, &workloads, &cells);
    for m in [Metric::Fr, Metric::Tc] {
        ensure(t.mark_of("monolith", "pausing", m) == Some((Mark::Best, false)), || {
            format!("{m:?}: monolith is {:?}", t.mark_of("monolith", "pausing", m))
        })?;
        ensure(t.mark_of("serverless", "pausing", m) == Some((Mark::Worst, false)), || {
            format!("{m:?}: serverless is {:?}", t.mark_of("serverless", "pausing", m))
        })?;
        ensure(t.mark_of("microservices", "pausing", m).is_none(), || format!("{m:?}: microservices marked"))?;
    }
    let md = render_markdown(&t, &[]);
    ensure(md.contains("**0.89**") && md.contains("_5.1_"), || "FR marks missing from markdown".into())?;
    ensure(md.contains("**0.16**") && md.contains("_4.09_"), || "TC marks missing from markdown".into())?;
    Ok("monolith best and serverless worst on FR and TC".into())
}

// ---------------------------------------------------------------------------
// 8. robustness

fn dropout_plan(dir: &Path, drop: f64, attempts: &str) -> wattlab::ExperimentPlan {
    let collector = format!(
        "{SIM_COLLECTOR}inject = {{ drop_fraction = {drop}, attempts = {attempts}, seed = 8 }}\n"
    );
    write_plan(dir, "settle = 10", &[collector, variant("monolith"), stress(120, 60, 31)]).1
}

fn robustness(ctx: &mut Context) -> Check {
    let dir = ctx.scratch().join("dropout-20");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let plan = dropout_plan(&dir, 0.2, "[1]");
    let run = dir.join("run");
    let summary = execute_plan(&plan, &mut SimDriver::new(), &run).map_err(|e| e.to_string())?;
    let h = &summary.cells[0].history;
    ensure(h.attempts.first().map(|a| a.phase) == Some(Phase::Retried), || {
        format!("20% drop: first attempt ended {:?}", h.attempts.first().map(|a| a.phase))
    })?;
    let faulty = read_transitions(&run.join(STATE_FILE))
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|t| t.attempt == 1 && t.phase == Phase::Faulty)
        .ok_or("20% drop: attempt 1 never marked faulty")?;
    let diag = faulty.diagnostic.unwrap_or_default();
    ensure(diag.contains("coverage"), || format!("20% drop: diagnostic `{diag}`"))?;
    ensure(h.done_attempt() == Some(2), || format!("20% drop: retry ended {:?}", h.current().map(|a| a.phase)))?;

    let dir = ctx.scratch().join("dropout-5");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let plan = dropout_plan(&dir, 0.05, "[]");
    let run = dir.join("run");
    let summary = execute_plan(&plan, &mut SimDriver::new(), &run).map_err(|e| e.to_string())?;
    let h = &summary.cells[0].history;
    ensure(h.done_attempt() == Some(1), || format!("5% drop: {:?}", h.current().map(|a| a.phase)))?;
    let cell = run.join("monolith/stress/1");
    let report = MetricsReport::from_json(&fs::read_to_string(cell.join("metrics.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let gt: GroundTruth =
        serde_json::from_str(&fs::read_to_string(cell.join("attempt-1").join(GROUND_TRUTH_FILE)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(report.energy_coverage >= 0.9, || format!("5% drop: coverage {}", report.energy_coverage))?;
    let (wr, want) = (report.wr.ok_or("5% drop: WR undefined")?, gt.wr.ok_or("no ground truth WR")?);
    let err = rel_err(wr, want);
    ensure(err <= 0.07, || format!("5% drop: WR {wr} vs ground truth {want}"))?;
    Ok(format!(
        "20% drop faulty then retried; 5% drop coverage {:.3}, WR off by {:.2}%",
        report.energy_coverage,
        err * 100.0
    ))
}

// ---------------------------------------------------------------------------
// 9. crash recovery

fn crash_recovery(ctx: &mut Context) -> Check {
    let dir = ctx.scratch().join("crash");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let (plan_path, _) = write_plan(
        &dir,
        "settle = 10\nrepetitions = 2",
        &[SIM_COLLECTOR.into(), variant("monolith"), variant("serverless"), pausing(60, 41)],
    );
    let run = dir.join("run");
    let o = wattlab()
        .env(CRASH_ENV, "loading@2")
        .arg("run")
        .arg(&plan_path)
        .arg("--out")
        .arg(&run)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(!o.status.success(), || "runner survived the injected crash".into())?;
    let o = wattlab().arg("resume").arg(&run).output().map_err(|e| e.to_string())?;
    ensure(o.status.code() == Some(0), || {
        format!("resume exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim())
    })?;
    let m = verify_manifest(&run)?;
    ensure(m.selected.len() == 4 && m.seeds.len() == 4, || format!("{} of 4 cells selected", m.selected.len()))?;
    let mut done: BTreeMap<String, usize> = BTreeMap::new();
    for t in read_transitions(&run.join(STATE_FILE)).map_err(|e| e.to_string())? {
        if t.phase == Phase::Done {
            *done.entry(t.cell.to_string()).or_default() += 1;
        }
    }
    ensure(done.len() == 4 && done.values().all(|n| *n == 1), || format!("completions per cell: {done:?}"))?;
    let interrupted = m
        .cells
        .values()
        .flat_map(|h| &h.attempts)
        .filter(|a| a.diagnostics.iter().any(|d| d.contains("interrupted")))
        .count();
    ensure(interrupted == 1, || format!("{interrupted} interrupted attempts recorded"))?;
    Ok("crash in the second loading phase, resume completed 4 cells once each, manifest verified".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn(&mut Context) -> Check); 9] = [
        ("metric-oracle equivalence", metric_oracles),
        ("pipeline fidelity", pipeline_fidelity),
        ("determinism", determinism),
        ("workload contracts", workload_contracts),
        ("scaling waste fixture", scaling_waste_fixture),
        ("cost-book fixture", cost_fixture),
        ("ranking fixture", ranking_fixture),
        ("robustness", robustness),
        ("crash recovery", crash_recovery),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut ctx)))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match result {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

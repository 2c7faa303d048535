use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::driver::{isolate_workload_node, CellSetup, DeployHandle, DeploymentDriver, DriverError};
use super::poller::Poller;
use super::state::{CellHistory, CellId, Phase, RunStateError, StateMachine, STATE_FILE};
use super::{CrashPoint, DriverKind, CRASH_ENV};
use crate::aggregator::{
    assemble_timelines, attribute_energy, coverage, write_timelines_csv, CoverageReport,
    EnergyLedger, Grid, ResourceTimeline, SutSelector,
};
use crate::collectors::{enrich, poll, read_journal, write_trace, Backend, BatchStatus, PollContext};
use crate::metrics::{compute_report, FnInvocation, MetricsInput};
use crate::model::{
    parse_plan, patch_descriptor, render_plan, ConfigError, DocFormat, ExperimentPlan,
    MeasurementSample, MetricsReport, Patch, SampleKind, Timestamp, Topology, VariantSpec,
    WorkloadSpec,
};
use crate::workloads::{build_schedule, read_request_log, write_request_log};

pub const PLAN_SNAPSHOT: &str = "plan.toml";
pub const RUN_INFO: &str = "run.json";

const DRIVER_LOG: &str = "driver.log";
const BUILD_LOG: &str = "build.log";
const COLLECTORS_DIR: &str = "collectors";
const REQUESTS: &str = "requests.csv";
const WINDOW: &str = "window.json";
const TOPOLOGY: &str = "topology.json";
const PLACEMENT: &str = "placement.json";
const COVERAGE: &str = "coverage.json";
const INVOCATIONS: &str = "invocations.json";
const TIMELINES: &str = "timelines.csv";
const ENERGY: &str = "energy.json";
pub(crate) const METRICS: &str = "metrics.json";
/// Custom-kind samples of an attempt, unaggregated, in trace format.
pub const CUSTOM_FILE: &str = "custom.csv";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    State(#[from] RunStateError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("collector `{0}` failed its preflight query: {1}")]
    Observer(String, String),
    #[error("{0} already holds a run; use `resume` to continue it")]
    AlreadyStarted(PathBuf),
    #[error("report: {0}")]
    Report(String),
}

impl RunnerError {
    /// Problems with the plan or the environment rather than with a cell.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RunnerError::Config(_)
                | RunnerError::Driver(_)
                | RunnerError::Observer(..)
                | RunnerError::AlreadyStarted(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stored next to the plan snapshot so a run can be resumed from its
/// directory alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    /// Directory the plan's relative paths resolve against.
    pub base_dir: PathBuf,
    pub driver: DriverKind,
    pub tool_version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub cell: CellId,
    pub history: CellHistory,
}

impl CellOutcome {
    pub fn is_done(&self) -> bool {
        self.history.done_attempt().is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub cells: Vec<CellOutcome>,
}

impl RunSummary {
    pub fn all_done(&self) -> bool {
        self.cells.iter().all(CellOutcome::is_done)
    }

    /// 0 when every cell is done, 2 when some stayed faulty.
    pub fn exit_code(&self) -> i32 {
        if self.all_done() {
            0
        } else {
            2
        }
    }
}

/// Seed of one repetition of a workload. Variants share it so they see
/// the same user schedule.
pub fn cell_seed(workload: &str, seed: u64, repetition: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(workload.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(repetition.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Runs every cell of `plan` into the fresh directory `run_dir`, then
/// compiles the report.
pub fn execute_plan(
    plan: &ExperimentPlan,
    driver: &mut dyn DeploymentDriver,
    run_dir: &Path,
) -> Result<RunSummary, RunnerError> {
    if run_dir.join(STATE_FILE).exists() {
        return Err(RunnerError::AlreadyStarted(run_dir.to_path_buf()));
    }
    plan.validate()?;
    driver.preflight(plan)?;
    if !driver.is_virtual() {
        preflight_collectors(plan, &poll_context(driver, plan, 0))?;
    }
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    let base_dir = fs::canonicalize(if plan.base_dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        &plan.base_dir
    })
    .map_err(io_err(&plan.base_dir))?;
    let info = RunInfo {
        base_dir,
        driver: if driver.is_virtual() {
            DriverKind::Sim
        } else {
            DriverKind::External
        },
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&run_dir.join(RUN_INFO), &info)?;
    let snapshot = run_dir.join(PLAN_SNAPSHOT);
    fs::write(&snapshot, render_plan(plan)).map_err(io_err(&snapshot))?;
    run_cells(plan, driver, run_dir)
}

/// Reads the plan snapshot and run info of an existing run.
pub fn load_run(run_dir: &Path) -> Result<(ExperimentPlan, RunInfo), RunnerError> {
    let info_path = run_dir.join(RUN_INFO);
    let text = fs::read_to_string(&info_path).map_err(io_err(&info_path))?;
    let info: RunInfo = serde_json::from_str(&text).map_err(|e| {
        RunnerError::Config(ConfigError::Schema {
            path: info_path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let plan_path = run_dir.join(PLAN_SNAPSHOT);
    let text = fs::read_to_string(&plan_path).map_err(io_err(&plan_path))?;
    let mut plan = parse_plan(&text)?;
    plan.base_dir = info.base_dir.clone();
    Ok((plan, info))
}

/// Continues an interrupted run from its journal.
pub fn resume(run_dir: &Path, driver: &mut dyn DeploymentDriver) -> Result<RunSummary, RunnerError> {
    let (plan, _) = load_run(run_dir)?;
    driver.preflight(&plan)?;
    if !driver.is_virtual() {
        preflight_collectors(&plan, &poll_context(driver, &plan, 0))?;
    }
    run_cells(&plan, driver, run_dir)
}

/// Queries the last minute from every mandatory live collector.
fn preflight_collectors(plan: &ExperimentPlan, ctx: &PollContext) -> Result<(), RunnerError> {
    let now = Timestamp::now();
    let window = (now.add_secs_f64(-60.0), now);
    for c in plan.collectors.iter().filter(|c| c.mandatory) {
        if !matches!(
            c.backend,
            Backend::TsdbHttp | Backend::ClusterMetrics | Backend::PowerMeter
        ) {
            continue;
        }
        let b = poll(c, window, ctx).map_err(|e| RunnerError::Observer(c.id.clone(), e.to_string()))?;
        if b.status == BatchStatus::Failed {
            return Err(RunnerError::Observer(
                c.id.clone(),
                b.diagnostic.unwrap_or_default(),
            ));
        }
    }
    Ok(())
}

fn run_cells(
    plan: &ExperimentPlan,
    driver: &mut dyn DeploymentDriver,
    run_dir: &Path,
) -> Result<RunSummary, RunnerError> {
    let sm = StateMachine::open(run_dir, plan.max_attempts).map_err(io_err(run_dir))?;
    let crash = std::env::var(CRASH_ENV)
        .ok()
        .and_then(|s| s.parse::<CrashPoint>().ok());
    let mut r = Runner {
        plan,
        driver,
        sm,
        run_dir,
        crash,
        crash_seen: 0,
        kept: None,
    };
    let mut cells = Vec::new();
    for v in &plan.variants {
        for w in &plan.workloads {
            let wl = plan.workload_for(v, w);
            for rep in 1..=plan.repetitions {
                let cell = CellId::new(&v.name, &w.name, rep);
                while let Some(attempt) = r.next_attempt(&cell)? {
                    r.sm.begin(&cell, attempt)?;
                    r.attempt(&cell, attempt, v, &wl)?;
                }
                cells.push(CellOutcome {
                    history: r.sm.history(&cell).cloned().unwrap_or_default(),
                    cell,
                });
            }
            r.release_kept();
        }
    }
    crate::report::compile_run(run_dir).map_err(|e| RunnerError::Report(e.to_string()))?;
    Ok(RunSummary {
        run_dir: run_dir.to_path_buf(),
        cells,
    })
}

struct Kept {
    variant: String,
    workload: String,
    handle: DeployHandle,
}

enum Failure {
    Cell(String),
    Harness(RunnerError),
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        Failure::Harness(e)
    }
}

impl From<RunStateError> for Failure {
    fn from(e: RunStateError) -> Self {
        Failure::Harness(e.into())
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        Failure::Cell(e.to_string())
    }
}

struct Runner<'a> {
    plan: &'a ExperimentPlan,
    driver: &'a mut dyn DeploymentDriver,
    sm: StateMachine,
    run_dir: &'a Path,
    crash: Option<CrashPoint>,
    crash_seen: u32,
    kept: Option<Kept>,
}

impl Runner<'_> {
    /// Settles the journal state of `cell` and returns the attempt to run
    /// next, if any. Interrupted attempts are torn down and marked faulty.
    fn next_attempt(&mut self, cell: &CellId) -> Result<Option<u32>, RunnerError> {
        let Some(state) = self.sm.history(cell).and_then(|h| h.current()).cloned() else {
            return Ok(Some(1));
        };
        let mut phase = state.phase;
        if !phase.is_terminal() {
            if phase.holds_deployment() {
                let handle = DeployHandle::for_variant(&cell.variant);
                let dir = self.run_dir.join(cell.attempt_dir(state.attempt));
                let mut log = open_log(&dir.join(DRIVER_LOG))?;
                let _ = writeln!(log, "interrupted in {phase}; tearing down");
                if let Err(e) = self.driver.teardown(&handle, &mut log) {
                    let _ = writeln!(log, "{e}");
                }
                self.kept = None;
            }
            self.sm.advance(
                cell,
                Phase::Faulty,
                Some(format!("interrupted during {phase}")),
            )?;
            phase = Phase::Faulty;
        }
        match phase {
            Phase::Done => Ok(None),
            Phase::Faulty if state.attempt < self.plan.max_attempts => {
                self.sm.advance(cell, Phase::Retried, None)?;
                Ok(Some(state.attempt + 1))
            }
            Phase::Retried if state.attempt < self.plan.max_attempts => Ok(Some(state.attempt + 1)),
            _ => Ok(None),
        }
    }

    fn release_kept(&mut self) {
        if let Some(k) = self.kept.take() {
            let _ = self.driver.teardown(&k.handle, &mut io::sink());
        }
    }

    fn attempt(
        &mut self,
        cell: &CellId,
        attempt: u32,
        variant: &VariantSpec,
        workload: &WorkloadSpec,
    ) -> Result<(), RunnerError> {
        let dir = self.run_dir.join(cell.attempt_dir(attempt));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut handle = self
            .kept
            .take()
            .filter(|k| k.variant == cell.variant && k.workload == cell.workload)
            .map(|k| k.handle);
        let reused = handle.is_some();
        let outcome = self.phases(cell, attempt, variant, workload, &dir, &mut handle, reused);
        match outcome {
            Ok(()) => Ok(()),
            Err(Failure::Harness(e)) => Err(e),
            Err(Failure::Cell(why)) => {
                let mut diag = why;
                if let Some(h) = handle.take() {
                    let mut log = open_log(&dir.join(DRIVER_LOG))?;
                    if let Err(e) = self.driver.teardown(&h, &mut log) {
                        diag.push_str(&format!("; {e}"));
                    }
                }
                log::warn!("{cell} attempt {attempt} faulty: {diag}");
                self.sm.advance(cell, Phase::Faulty, Some(diag))?;
                Ok(())
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn phases(
        &mut self,
        cell: &CellId,
        attempt: u32,
        variant: &VariantSpec,
        workload: &WorkloadSpec,
        dir: &Path,
        handle: &mut Option<DeployHandle>,
        reused: bool,
    ) -> Result<(), Failure> {
        let plan = self.plan;
        let seed = cell_seed(&workload.name, workload.seed, cell.repetition);
        let selector = SutSelector::new(plan.sut_services.clone(), plan.infrastructure_prefixes.clone());
        let mut log = open_log(&dir.join(DRIVER_LOG))?;

        self.sm.advance(cell, Phase::Building, None)?;
        if reused {
            let _ = writeln!(log, "reusing the deployment of the previous repetition");
        } else {
            let mut build_log = open_log(&dir.join(BUILD_LOG))?;
            let refs = self.driver.build(variant, &mut build_log)?;
            write_json(&dir.join("artifacts.json"), &refs)?;
        }

        self.sm.advance(cell, Phase::Patching, None)?;
        let descriptor = if reused {
            None
        } else {
            Some(write_patched_descriptor(plan, variant, dir).map_err(Failure::Cell)?)
        };

        self.sm.advance(cell, Phase::Deploying, None)?;
        if let Some(descriptor) = descriptor {
            let setup = CellSetup { variant, dir, seed };
            *handle = Some(self.driver.deploy(&descriptor, &setup, &mut log)?);
        }
        let h = handle.clone().expect("deployed");
        self.driver.wait_ready(&h, plan.ready_timeout)?;
        let topo = self.driver.topology(&h)?;
        let placement = match isolate_workload_node(&topo, &topo.nodes, &selector) {
            Ok(node) => serde_json::json!({ "workload_node": node }),
            Err(e) => serde_json::json!({ "workload_node": null, "note": e.to_string() }),
        };
        write_json(&dir.join(PLACEMENT), &placement)?;

        self.sm.advance(cell, Phase::Settling, None)?;
        let settle = if reused { plan.inter_run_settle } else { plan.settle };
        self.driver.settle(&h, settle);

        self.sm.advance(cell, Phase::Loading, None)?;
        self.crash_check(Phase::Loading);
        let schedule = build_schedule(&WorkloadSpec {
            seed,
            ..workload.clone()
        })
        .map_err(|e| Failure::Cell(e.to_string()))?;
        let start = self.driver.clock();
        let cdir = dir.join(COLLECTORS_DIR);
        let mut poller = Poller::new(&plan.collectors, &cdir, poll_context(self.driver, plan, attempt), start)
            .map_err(io_err(&cdir))?;
        let drive = if self.driver.is_virtual() {
            self.driver.drive(&h, &schedule, &plan.scenario)?
        } else {
            drive_with_polling(self.driver, &h, &schedule, plan, &mut poller, &cdir)?
        };
        let grid = Grid::covering(drive.started, drive.ended);
        let requests = dir.join(REQUESTS);
        let file = File::create(&requests).map_err(io_err(&requests))?;
        write_request_log(file, &drive.records).map_err(|e| Failure::Cell(e.to_string()))?;
        write_json(&dir.join(WINDOW), &(grid.start, grid.end))?;

        self.sm.advance(cell, Phase::Collecting, None)?;
        let end = Timestamp::from_secs(grid.end);
        if !self.driver.is_virtual() {
            let step = plan.collectors.iter().map(|c| c.step).max().unwrap_or(1);
            while self.driver.clock() < end.add_secs_f64(step as f64) {
                std::thread::sleep(Duration::from_millis(200));
            }
        }
        poller.set_context(poll_context(self.driver, plan, attempt));
        poller.poll_until(end).map_err(io_err(&cdir))?;
        poller.flush(end).map_err(io_err(&cdir))?;
        let topo = self.driver.topology(&h)?;
        write_json(&dir.join(TOPOLOGY), &topo)?;
        write_json(
            &dir.join(INVOCATIONS),
            &self.driver.invocations((grid.start, grid.end)),
        )?;
        let by_collector = load_samples(dir, &topo).map_err(io_err(&cdir))?;
        let cov = collector_coverage(plan, &by_collector, &topo, grid);
        let fractions: BTreeMap<&str, f64> =
            cov.iter().map(|(k, v)| (k.as_str(), v.fraction())).collect();
        write_json(&dir.join(COVERAGE), &fractions)?;
        for c in plan.collectors.iter().filter(|c| c.mandatory) {
            if c.kinds().is_empty() && by_collector.get(&c.id).is_none_or(Vec::is_empty) {
                return Err(Failure::Cell(format!("collector `{}` returned no samples", c.id)));
            }
            let f = fractions.get(c.id.as_str()).copied().unwrap_or(0.0);
            if f < plan.coverage_threshold {
                return Err(Failure::Cell(format!(
                    "coverage of collector `{}` is {:.3}, below {}",
                    c.id, f, plan.coverage_threshold
                )));
            }
        }

        self.sm.advance(cell, Phase::TearingDown, None)?;
        let keep = !plan.teardown_between_runs && cell.repetition < plan.repetitions;
        self.driver
            .export(dir, (grid.start, grid.end), plan, &selector)
            .map_err(io_err(dir))?;
        if keep {
            let _ = writeln!(log, "keeping the deployment for the next repetition");
            self.kept = Some(Kept {
                variant: cell.variant.clone(),
                workload: cell.workload.clone(),
                handle: handle.take().expect("deployed"),
            });
        } else {
            self.driver.teardown(&h, &mut log)?;
            *handle = None;
        }

        self.sm.advance(cell, Phase::Exporting, None)?;
        let eval = evaluate_attempt(plan, variant, workload, dir).map_err(Failure::Cell)?;
        let metrics = eval.report.to_json();
        let at = dir.join(METRICS);
        fs::write(&at, &metrics).map_err(io_err(&at))?;
        let at = self.run_dir.join(cell.dir()).join(METRICS);
        fs::write(&at, &metrics).map_err(io_err(&at))?;
        let at = self.run_dir.join(cell.dir()).join(CUSTOM_FILE);
        if dir.join(CUSTOM_FILE).exists() {
            fs::copy(dir.join(CUSTOM_FILE), &at).map_err(io_err(&at))?;
        } else if at.exists() {
            fs::remove_file(&at).map_err(io_err(&at))?;
        }

        self.sm.advance(cell, Phase::Done, None)?;
        Ok(())
    }

    fn crash_check(&mut self, phase: Phase) {
        if let Some(c) = self.crash {
            if c.phase == phase {
                self.crash_seen += 1;
                if self.crash_seen == c.nth {
                    log::error!("{CRASH_ENV}: aborting in {phase}");
                    std::process::abort();
                }
            }
        }
    }
}

/// Drives the load on the current thread while a second thread polls the
/// collectors every second.
fn drive_with_polling(
    driver: &mut dyn DeploymentDriver,
    handle: &DeployHandle,
    schedule: &crate::workloads::UserSchedule,
    plan: &ExperimentPlan,
    poller: &mut Poller,
    cdir: &Path,
) -> Result<crate::workloads::DriveResult, Failure> {
    let stop = AtomicBool::new(false);
    let (drive, polled) = std::thread::scope(|s| {
        let worker = s.spawn(|| -> io::Result<()> {
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(Duration::from_secs(1));
                poller.poll_until(Timestamp::now())?;
            }
            Ok(())
        });
        let drive = driver.drive(handle, schedule, &plan.scenario);
        stop.store(true, Ordering::Relaxed);
        (drive, worker.join().expect("poller thread"))
    });
    polled.map_err(io_err(cdir))?;
    Ok(drive?)
}

/// Writes the variant's descriptor with its resource specs and patches
/// applied, in the descriptor's own format.
fn write_patched_descriptor(
    plan: &ExperimentPlan,
    variant: &VariantSpec,
    dir: &Path,
) -> Result<PathBuf, String> {
    let src = plan.resolve(&variant.deployment_descriptor);
    let text = fs::read_to_string(&src).map_err(|e| format!("{}: {e}", src.display()))?;
    let format = DocFormat::from_path(&src);
    let doc = format.parse(&text).map_err(|e| format!("{}: {e}", src.display()))?;
    let d = &plan.driver;
    let mut patches = Vec::new();
    for (svc, spec) in &variant.resource_specs {
        let at = |template: &str| template.replace("{service}", svc);
        patches.push(Patch::new(at(&d.cpu_limit_path), spec.cpu_limit));
        patches.push(Patch::new(at(&d.mem_limit_path), spec.mem_limit));
        patches.push(Patch::new(at(&d.replicas_min_path), spec.replicas_min));
        patches.push(Patch::new(at(&d.replicas_max_path), spec.replicas_max));
    }
    patches.extend(variant.patches.iter().cloned());
    let patched = patch_descriptor(&doc, &patches).map_err(|e| e.to_string())?;
    let out = dir.join(format!("descriptor.{}", format.extension()));
    let rendered = format.render(&patched)?;
    fs::write(&out, rendered).map_err(|e| format!("{}: {e}", out.display()))?;
    Ok(out)
}

/// The driver's poll context with recorded traces resolved against the
/// plan's directory.
fn poll_context(driver: &dyn DeploymentDriver, plan: &ExperimentPlan, attempt: u32) -> PollContext {
    PollContext {
        base_dir: plan.base_dir.clone(),
        ..driver.poll_context(attempt)
    }
}

/// Journaled samples per collector, enriched with `topology`.
fn load_samples(
    dir: &Path,
    topology: &Topology,
) -> io::Result<BTreeMap<String, Vec<MeasurementSample>>> {
    let mut out: BTreeMap<String, Vec<MeasurementSample>> = BTreeMap::new();
    for b in read_journal(&dir.join(COLLECTORS_DIR))? {
        out.entry(b.collector_id).or_default().extend(b.samples);
    }
    for samples in out.values_mut() {
        enrich(samples, topology);
    }
    Ok(out)
}

fn collector_coverage(
    plan: &ExperimentPlan,
    by_collector: &BTreeMap<String, Vec<MeasurementSample>>,
    topology: &Topology,
    grid: Grid,
) -> BTreeMap<String, CoverageReport> {
    plan.collectors
        .iter()
        .map(|c| {
            let samples = by_collector.get(&c.id).map(Vec::as_slice).unwrap_or(&[]);
            (c.id.clone(), coverage(samples, &c.kinds(), topology, grid, c.step))
        })
        .collect()
}

/// Everything derived from one attempt's raw artifacts.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub window: (i64, i64),
    pub timelines: Vec<ResourceTimeline>,
    pub ledger: EnergyLedger,
    pub coverage: BTreeMap<String, CoverageReport>,
}

/// Recomputes the metrics of one attempt from the files in `dir` and
/// writes the derived timelines and energy split next to them.
pub fn evaluate_attempt(
    plan: &ExperimentPlan,
    variant: &VariantSpec,
    workload: &WorkloadSpec,
    dir: &Path,
) -> Result<Evaluation, String> {
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|e| format!("{}: {e}", dir.join(name).display()))
    };
    let (start, end): (i64, i64) = serde_json::from_str(&read(WINDOW)?).map_err(|e| e.to_string())?;
    let topology: Topology = serde_json::from_str(&read(TOPOLOGY)?).map_err(|e| e.to_string())?;
    let invocations: Vec<FnInvocation> =
        serde_json::from_str(&read(INVOCATIONS)?).map_err(|e| e.to_string())?;
    let requests = read_request_log(read(REQUESTS)?.as_bytes())?;
    let by_collector = load_samples(dir, &topology).map_err(|e| e.to_string())?;
    let grid = Grid::new(start, end);
    let cov = collector_coverage(plan, &by_collector, &topology, grid);
    let energy_coverage = plan
        .collectors
        .iter()
        .filter(|c| c.kinds().iter().any(|k| k.is_energy()))
        .map(|c| cov[&c.id].pooled(|k| k.is_energy()))
        .fold(1.0, f64::min);
    let samples: Vec<MeasurementSample> = by_collector.into_values().flatten().collect();
    let mut custom: Vec<MeasurementSample> =
        samples.iter().filter(|s| s.kind == SampleKind::Custom).cloned().collect();
    if !custom.is_empty() {
        custom.sort_by(|a, b| {
            (a.timestamp, &a.source, &a.node, &a.pod).cmp(&(b.timestamp, &b.source, &b.node, &b.pod))
        });
        let file = File::create(dir.join(CUSTOM_FILE)).map_err(|e| e.to_string())?;
        write_trace(file, &custom).map_err(|e| e.to_string())?;
    }
    let (timelines, stats) = assemble_timelines(&samples, &topology, grid, &plan.cleaning);
    let selector = SutSelector::new(plan.sut_services.clone(), plan.infrastructure_prefixes.clone());
    let ledger = attribute_energy(&timelines, &selector).map_err(|e| e.to_string())?;
    let report = compute_report(&MetricsInput {
        timelines: &timelines,
        ledger: &ledger,
        requests: &requests,
        invocations: &invocations,
        selector: &selector,
        specs: &variant.resource_specs,
        book: &plan.cost_book,
        aux: &plan.aux,
        rule: &plan.over_provision,
        window: (Timestamp::from_secs(start), Timestamp::from_secs(end)),
        ramp_exclusion: workload.ramp_exclusion,
        energy_coverage,
        removed_outliers: stats.removed_outliers as u64,
    })
    .map_err(|e| e.to_string())?;

    let path = dir.join(TIMELINES);
    let file = File::create(&path).map_err(|e| e.to_string())?;
    write_timelines_csv(file, &timelines).map_err(|e| e.to_string())?;
    let energy = serde_json::json!({
        "per_layer": ledger.per_layer.iter().map(|(l, j)| (l.as_str(), *j)).collect::<BTreeMap<_, _>>(),
        "sut_joules": ledger.sut_joules,
        "overhead_joules": ledger.overhead_joules,
        "excluded_joules": ledger.excluded_joules,
        "node_joules": ledger.node_joules,
        "warnings": ledger.warnings,
        "unattributed_samples": stats.unattributed_samples,
    });
    write_json(&dir.join(ENERGY), &energy).map_err(|e| e.to_string())?;
    Ok(Evaluation {
        report,
        window: (start, end),
        timelines,
        ledger,
        coverage: cov,
    })
}

fn open_log(path: &Path) -> Result<File, RunnerError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

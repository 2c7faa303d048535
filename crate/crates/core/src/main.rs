use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wattlab::model::load_plan;
use wattlab::report::{compile_run, render_merged_markdown};
use wattlab::runner::{
    execute_plan, load_run, resume, DeploymentDriver, DriverKind, ExternalDriver, RunSummary,
    RunnerError, SimDriver,
};
use wattlab::ExperimentPlan;

const EXIT_FAULTY: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "wattlab", version, about = "Energy-efficiency experiments for cloud-native application variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriverArg {
    Sim,
    External,
}

impl From<DriverArg> for DriverKind {
    fn from(d: DriverArg) -> Self {
        match d {
            DriverArg::Sim => DriverKind::Sim,
            DriverArg::External => DriverKind::External,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute every cell of a plan.
    Run {
        plan: PathBuf,
        /// Overrides the plan's driver kind.
        #[arg(long, value_enum)]
        driver: Option<DriverArg>,
        /// Run directory; defaults to the plan's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an interrupted run.
    Resume {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        driver: Option<DriverArg>,
    },
    /// Check a plan without running it.
    Validate { plan: PathBuf },
    /// Recompile the comparison, plots and manifest of a run.
    Report {
        run_dir: PathBuf,
        /// Also write a view with two workloads per cell, e.g. `pausing,stress`.
        #[arg(long, value_name = "FIRST,SECOND")]
        merge: Option<String>,
    },
}

fn make_driver(kind: DriverKind, plan: &ExperimentPlan) -> Box<dyn DeploymentDriver> {
    match kind {
        DriverKind::Sim => Box::new(SimDriver::new()),
        DriverKind::External => Box::new(ExternalDriver::new(plan.driver.clone(), plan.base_dir.clone())),
    }
}

fn finish(result: Result<RunSummary, RunnerError>) -> ExitCode {
    match result {
        Ok(summary) => {
            for c in &summary.cells {
                let attempts = c.history.attempts.len();
                match c.history.done_attempt() {
                    Some(a) => println!("{}: done (attempt {a} of {attempts})", c.cell),
                    None => println!("{}: faulty after {attempts} attempts", c.cell),
                }
            }
            println!("results in {}", summary.run_dir.display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(plan_path: &Path, driver: Option<DriverArg>, out: Option<PathBuf>) -> ExitCode {
    let plan = match load_plan(plan_path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", plan_path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let kind = driver.map(DriverKind::from).unwrap_or(plan.driver.kind);
    let run_dir = out.unwrap_or_else(|| plan.resolve(&plan.output_dir));
    let mut d = make_driver(kind, &plan);
    finish(execute_plan(&plan, d.as_mut(), &run_dir))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { plan, driver, out } => run(&plan, driver, out),
        Command::Resume { run_dir, driver } => {
            let (plan, info) = match load_run(&run_dir) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let kind = driver.map(DriverKind::from).unwrap_or(info.driver);
            let mut d = make_driver(kind, &plan);
            finish(resume(&run_dir, d.as_mut()))
        }
        Command::Validate { plan } => match load_plan(&plan) {
            Ok(p) => {
                println!(
                    "{}: {} variants × {} workloads × {} repetitions",
                    plan.display(),
                    p.variants.len(),
                    p.workloads.len(),
                    p.repetitions
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {}: {e}", plan.display());
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Report { run_dir, merge } => {
            let compiled = match compile_run(&run_dir) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Some(spec) = merge {
                let Some((a, b)) = spec.split_once(',') else {
                    eprintln!("error: --merge expects FIRST,SECOND");
                    return ExitCode::from(EXIT_CONFIG);
                };
                let path = run_dir.join("comparison_merged.md");
                if let Err(e) = std::fs::write(&path, render_merged_markdown(&compiled.table, a, b)) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            for g in &compiled.gaps {
                println!("missing: {g}");
            }
            println!("{} cells compiled into {}", compiled.cells.len(), run_dir.display());
            if compiled.gaps.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAULTY)
            }
        }
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::driver::{CellSetup, DeployHandle, DeploymentDriver, DriverError};
use super::{DriverConfig, KUBECONFIG_ENV};
use crate::aggregator::SutSelector;
use crate::collectors::{Backend, PollContext};
use crate::metrics::FnInvocation;
use crate::model::{ExperimentPlan, SourceRef, Timestamp, Topology, VariantSpec};
use crate::workloads::{drive_realtime, DriveResult, HttpExecutor, Scenario, UserSchedule};

const READY_POLL: Duration = Duration::from_secs(2);

/// Drives a real cluster through shell command templates, e.g. a container
/// build tool and a package manager. Every command's output goes to the
/// cell's logs.
///
/// Placeholders: `{variant}`, `{source}`, `{branch}`, `{image}`,
/// `{release}`, `{descriptor}` and `{seed}`.
pub struct ExternalDriver {
    config: DriverConfig,
    base_dir: PathBuf,
    kubeconfig: Option<String>,
    deployed: Option<DeployHandle>,
}

impl ExternalDriver {
    pub fn new(config: DriverConfig, base_dir: PathBuf) -> Self {
        ExternalDriver {
            config,
            base_dir,
            kubeconfig: std::env::var(KUBECONFIG_ENV).ok(),
            deployed: None,
        }
    }

    fn run(&self, template: &str, vars: &[(&str, String)], log: &mut dyn Write) -> Result<String, String> {
        let mut cmd = template.to_string();
        for (k, v) in vars {
            cmd = cmd.replace(&format!("{{{k}}}"), v);
        }
        let _ = writeln!(log, "$ {cmd}");
        let mut c = Command::new("sh");
        c.arg("-c").arg(&cmd).current_dir(&self.base_dir);
        if let Some(k) = &self.kubeconfig {
            c.env("KUBECONFIG", k);
        }
        let out = c.output().map_err(|e| format!("`{cmd}`: {e}"))?;
        let _ = log.write_all(&out.stdout);
        let _ = log.write_all(&out.stderr);
        let _ = writeln!(log, "[exit {}]", out.status.code().map_or("signal".into(), |c| c.to_string()));
        if out.status.success() {
            Ok(String::from_utf8_lossy(&out.stdout).into_owned())
        } else {
            Err(format!("`{cmd}` exited with {}", out.status))
        }
    }

    fn variant_vars(variant: &VariantSpec) -> Vec<(&'static str, String)> {
        let (source, branch) = match &variant.source {
            SourceRef::Path { path } => (path.display().to_string(), String::new()),
            SourceRef::Git { repo, branch } => (repo.clone(), branch.clone()),
        };
        vec![
            ("variant", variant.name.clone()),
            ("source", source),
            ("branch", branch),
            ("image", format!("wattlab/{}:latest", variant.name)),
            ("release", DeployHandle::for_variant(&variant.name).release),
        ]
    }
}

impl DeploymentDriver for ExternalDriver {
    fn name(&self) -> &'static str {
        "external"
    }

    fn is_virtual(&self) -> bool {
        false
    }

    fn preflight(&mut self, plan: &ExperimentPlan) -> Result<(), DriverError> {
        let c = &self.config;
        for (name, v) in [
            ("driver.deploy_command", &c.deploy_command),
            ("driver.teardown_command", &c.teardown_command),
            ("driver.topology_command", &c.topology_command),
            ("driver.target_url", &c.target_url),
        ] {
            if v.is_none() {
                return Err(DriverError::Preflight(format!("{name} is required by the external driver")));
            }
        }
        if let Some(col) = plan.collectors.iter().find(|c| c.backend == Backend::Simulator) {
            return Err(DriverError::Preflight(format!(
                "collector `{}` uses the simulator backend, which needs the simulator driver",
                col.id
            )));
        }
        Ok(())
    }

    fn build(&mut self, variant: &VariantSpec, log: &mut dyn Write) -> Result<Vec<String>, DriverError> {
        let vars = Self::variant_vars(variant);
        let image = vars[3].1.clone();
        match &self.config.build_command {
            Some(t) => {
                self.run(t, &vars, log).map_err(DriverError::Build)?;
                Ok(vec![image])
            }
            None => {
                let _ = writeln!(log, "no build command configured");
                Ok(Vec::new())
            }
        }
    }

    fn deploy(
        &mut self,
        descriptor: &Path,
        setup: &CellSetup,
        log: &mut dyn Write,
    ) -> Result<DeployHandle, DriverError> {
        let mut vars = Self::variant_vars(setup.variant);
        vars.push(("descriptor", descriptor.display().to_string()));
        vars.push(("seed", setup.seed.to_string()));
        let template = self.config.deploy_command.as_deref().unwrap_or_default();
        self.run(template, &vars, log).map_err(DriverError::Deploy)?;
        let handle = DeployHandle::for_variant(&setup.variant.name);
        self.deployed = Some(handle.clone());
        Ok(handle)
    }

    fn wait_ready(&mut self, handle: &DeployHandle, timeout: f64) -> Result<(), DriverError> {
        let Some(t) = self.config.ready_command.clone() else {
            return Ok(());
        };
        let deadline = Instant::now() + Duration::from_secs_f64(timeout);
        let vars = [("release", handle.release.clone())];
        loop {
            if self.run(&t, &vars, &mut std::io::sink()).is_ok() {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return Err(DriverError::ReadyTimeout(timeout));
            }
            std::thread::sleep(READY_POLL);
        }
    }

    fn settle(&mut self, _handle: &DeployHandle, secs: u64) {
        std::thread::sleep(Duration::from_secs(secs));
    }

    fn drive(
        &mut self,
        _handle: &DeployHandle,
        schedule: &UserSchedule,
        scenario: &Scenario,
    ) -> Result<DriveResult, DriverError> {
        let url = self.config.target_url.as_deref().unwrap_or_default();
        let exec = Arc::new(HttpExecutor::new(
            url,
            Duration::from_secs_f64(self.config.request_timeout),
        ));
        let result = drive_realtime(schedule, exec, scenario);
        if result.aborted {
            return Err(DriverError::Load(format!("{url} stopped responding")));
        }
        Ok(result)
    }

    fn clock(&self) -> Timestamp {
        Timestamp::now()
    }

    fn poll_context(&self, attempt: u32) -> PollContext {
        PollContext {
            base_dir: self.base_dir.clone(),
            attempt,
            ..Default::default()
        }
    }

    fn topology(&mut self, handle: &DeployHandle) -> Result<Topology, DriverError> {
        let t = self.config.topology_command.clone().unwrap_or_default();
        let out = self
            .run(&t, &[("release", handle.release.clone())], &mut std::io::sink())
            .map_err(DriverError::Topology)?;
        serde_json::from_str(&out).map_err(|e| DriverError::Topology(e.to_string()))
    }

    fn invocations(&self, _window: (i64, i64)) -> Vec<FnInvocation> {
        Vec::new()
    }

    fn export(
        &mut self,
        _dir: &Path,
        _window: (i64, i64),
        _plan: &ExperimentPlan,
        _selector: &SutSelector,
    ) -> std::io::Result<()> {
        Ok(())
    }

    fn teardown(&mut self, handle: &DeployHandle, log: &mut dyn Write) -> Result<(), DriverError> {
        let t = self.config.teardown_command.clone().unwrap_or_default();
        self.run(&t, &[("release", handle.release.clone())], log)
            .map_err(DriverError::Teardown)?;
        if self.deployed.as_ref() == Some(handle) {
            self.deployed = None;
        }
        Ok(())
    }
}

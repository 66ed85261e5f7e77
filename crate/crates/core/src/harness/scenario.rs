//! Scenario pipelines behind the command line.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::harness::config::{InitialCondition, ScenarioConfig, SystemSpec};
use crate::harness::experiments::{compare_full_and_reduced, three_body_routh};
use crate::harness::integrators::{integrate_system, integrator_registry, Integrator};
use crate::harness::io::{write_reports_json, write_trajectory_csv};
use crate::harness::registry::Registry;
use crate::harness::report::{all_pass, VerificationReport};
use crate::harness::sampling::ProbeSampler;
use crate::harness::suites::{suite_registry, SuiteContext};
use crate::harness::three_body::{build_three_body, ThreeBody, ThreeBodyParams};
use crate::harness::Trajectory;
use crate::lagrangian::BundleDims;
use crate::reduction::verify_projection;

/// Energy drift bound for `simulate` runs.
pub const ENERGY_TOLERANCE: f64 = 1e-7;
/// Momentum drift bound for `simulate` runs.
pub const MOMENTUM_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_COMPARE_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PROBES: usize = 100;

/// Command-line overrides; unset fields fall back to the config file.
#[derive(Clone, Debug, Default)]
pub struct ScenarioRequest {
    pub config: Option<ScenarioConfig>,
    pub connection: Option<String>,
    pub mu: Option<f64>,
    pub tol: Option<f64>,
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub probes: Option<usize>,
}

impl ScenarioRequest {
    fn config(&self) -> Result<&ScenarioConfig> {
        self.config.as_ref().ok_or_else(|| Error::Config("this scenario needs --config".into()))
    }

    fn mu(&self) -> Result<f64> {
        let mu = self.mu.or(self.config.as_ref().and_then(|c| c.mu));
        match mu {
            Some(m) if m.is_finite() => Ok(m),
            Some(m) => Err(Error::Config(format!("mu must be finite, got {m}"))),
            None => Err(Error::Config("mu is required (config field or --mu)".into())),
        }
    }

    fn connection(&self) -> Result<String> {
        let c = self
            .connection
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.connection.clone()))
            .unwrap_or_else(|| "mechanical".into());
        if !crate::harness::config::KNOWN_CONNECTIONS.contains(&c.as_str()) {
            return Err(Error::Config(format!("unknown connection '{c}'")));
        }
        Ok(c)
    }

    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().and_then(|c| c.seed)).unwrap_or(DEFAULT_SEED)
    }

    fn three_body(&self) -> Result<ThreeBody> {
        let params = match &self.config {
            Some(c) if !c.is_three_body() => {
                return Err(Error::Config("this scenario needs the three_body system".into()))
            }
            Some(c) => c.three_body_params(),
            None => ThreeBodyParams::default(),
        };
        params.validate()?;
        build_three_body(params)
    }

    fn integrator(&self) -> Result<Arc<dyn Integrator>> {
        integrator_registry().get(&self.config()?.integrator.method)
    }
}

/// A named trajectory with the bundle layout used for its CSV header.
#[derive(Clone, Debug)]
pub struct NamedTrajectory {
    pub name: String,
    pub dims: BundleDims,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioOutput {
    pub trajectories: Vec<NamedTrajectory>,
    pub reports: Vec<VerificationReport>,
}

impl ScenarioOutput {
    pub fn pass(&self) -> bool {
        all_pass(&self.reports)
    }

    /// `<name>.csv` per trajectory and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.trajectories {
            write_trajectory_csv(&dir.join(format!("{}.csv", t.name)), &t.trajectory, t.dims)?;
        }
        write_reports_json(&dir.join("report.json"), &self.reports)
    }

    fn push(&mut self, name: &str, dims: BundleDims, trajectory: Trajectory) {
        self.trajectories.push(NamedTrajectory { name: name.into(), dims, trajectory });
    }
}

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, req: &ScenarioRequest) -> Result<ScenarioOutput>;
}

pub fn scenario_registry() -> Registry<dyn Scenario> {
    let mut r: Registry<dyn Scenario> = Registry::new("scenario");
    r.register("simulate", Arc::new(Simulate));
    r.register("reduce", Arc::new(Reduce));
    r.register("verify", Arc::new(Verify));
    r.register("compare", Arc::new(Compare));
    r
}

/// Runs a scenario; configuration errors propagate, numerical failures
/// become a failed report.
pub fn run_scenario(name: &str, req: &ScenarioRequest) -> Result<ScenarioOutput> {
    let scenario = scenario_registry().get(name)?;
    match scenario.run(req) {
        Err(e @ Error::Config(_)) => Err(e),
        Err(e) => Ok(ScenarioOutput {
            trajectories: Vec::new(),
            reports: vec![VerificationReport::failed(name, 0, 0.0, e).with_seed(req.seed())],
        }),
        ok => ok,
    }
}

fn three_body_initial_state(tb: &ThreeBody, cfg: &ScenarioConfig, mu: Option<f64>) -> Result<DVector<f64>> {
    match &cfg.ic {
        InitialCondition::Full { q, v, .. } => Ok(DVector::from_iterator(6, q.iter().chain(v).copied())),
        InitialCondition::Reduced { reduced, group } => {
            let mu = mu.ok_or_else(|| Error::Config("a reduced initial condition needs mu".into()))?;
            let theta = group.first().copied().unwrap_or(0.0);
            Ok(tb.params.state_on_level(theta, reduced[0], reduced[1], reduced[2], reduced[3], mu))
        }
    }
}

fn drift(traj: &Trajectory, f: impl Fn(&DVector<f64>) -> Result<f64>) -> Result<f64> {
    let Some(first) = traj.states.first() else { return Ok(0.0) };
    let e0 = f(first)?;
    let mut worst = 0.0_f64;
    for s in &traj.states {
        worst = worst.max((f(s)? - e0).abs());
    }
    Ok(worst)
}

/// Full-system flow with energy and momentum drift.
pub struct Simulate;

impl Scenario for Simulate {
    fn name(&self) -> &'static str {
        "simulate"
    }

    fn run(&self, req: &ScenarioRequest) -> Result<ScenarioOutput> {
        let cfg = req.config()?;
        let integrator = req.integrator()?;
        let (h, t_end) = (cfg.integrator.h, cfg.integrator.t_end);
        let mut out = ScenarioOutput::default();
        match &cfg.system {
            SystemSpec::Inline { inline } => {
                let sys = inline.build()?;
                let s0 = match &cfg.ic {
                    InitialCondition::Full { q, v, .. } => DVector::from_iterator(2 * q.len(), q.iter().chain(v).copied()),
                    InitialCondition::Reduced { .. } => {
                        return Err(Error::Config("inline systems take a full initial condition".into()))
                    }
                };
                let traj = integrate_system(integrator.as_ref(), &sys, &s0, h, t_end)?;
                let e = drift(&traj, |s| sys.energy(s))?;
                out.reports.push(VerificationReport::new("energy_drift", traj.len(), e, ENERGY_TOLERANCE).with_h(h));
                out.push("trajectory", sys.dims, traj);
            }
            SystemSpec::Named(_) => {
                let tb = req.three_body()?;
                let s0 = three_body_initial_state(&tb, cfg, req.mu.or(cfg.mu))?;
                let traj = integrate_system(integrator.as_ref(), &tb.system, &s0, h, t_end)?;
                let e = drift(&traj, |s| Ok(tb.params.energy(s)))?;
                let j = drift(&traj, |s| Ok(tb.params.momentum(s)))?;
                out.reports.push(VerificationReport::new("energy_drift", traj.len(), e, ENERGY_TOLERANCE).with_h(h));
                out.reports.push(VerificationReport::new("momentum_drift", traj.len(), j, MOMENTUM_TOLERANCE).with_h(h));
                out.push("trajectory", tb.system.dims, traj);
            }
        }
        Ok(out)
    }
}

/// Routh reduction at `μ`, reduced flow and reconstruction.
pub struct Reduce;

impl Scenario for Reduce {
    fn name(&self) -> &'static str {
        "reduce"
    }

    fn run(&self, req: &ScenarioRequest) -> Result<ScenarioOutput> {
        let cfg = req.config()?;
        let (mu, conn, tb, integrator) = (req.mu()?, req.connection()?, req.three_body()?, req.integrator()?);
        let (h, t_end) = (cfg.integrator.h, cfg.integrator.t_end);
        let rr = three_body_routh(&tb, &conn, mu)?;
        let (r0, theta0) = match &cfg.ic {
            InitialCondition::Reduced { reduced, group } => {
                (DVector::from_column_slice(reduced), group.first().copied().unwrap_or(0.0))
            }
            InitialCondition::Full { .. } => {
                let s = three_body_initial_state(&tb, cfg, Some(mu))?;
                (rr.reduced_state(&s), s[0])
            }
        };
        let reduced = integrate_system(integrator.as_ref(), &rr.reduced, &r0, h, t_end)?;
        let reconstructed = rr.reconstruct(&reduced, &DVector::from_element(1, theta0))?;

        let seed = req.seed();
        let probes = ProbeSampler::new(seed).intermediate_states(req.probes.unwrap_or(DEFAULT_PROBES));
        let proj = verify_projection(&rr.intermediate, &rr.reduced, &rr.fiberwise, &probes)?;
        let e = drift(&reduced, |s| rr.reduced.energy(s))?;
        let j = drift(&reconstructed, |s| Ok(tb.params.momentum(s)))?;
        let mut out = ScenarioOutput::default();
        out.reports.push(
            VerificationReport::new(format!("projection/{conn}"), probes.len(), proj.omega.max(proj.energy), 1e-8)
                .with_seed(seed),
        );
        out.reports.push(VerificationReport::new("reduced_energy_drift", reduced.len(), e, ENERGY_TOLERANCE).with_h(h));
        out.reports.push(VerificationReport::new("reconstructed_momentum", reconstructed.len(), j, MOMENTUM_TOLERANCE).with_h(h));
        out.push("reduced", rr.reduced.dims, reduced);
        out.push("reconstructed", tb.system.dims, reconstructed);
        Ok(out)
    }
}

/// A named verification suite on seeded probes.
pub struct Verify;

impl Scenario for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn run(&self, req: &ScenarioRequest) -> Result<ScenarioOutput> {
        let name = req.suite.as_deref().ok_or_else(|| Error::Config("verify needs --suite".into()))?;
        let suite = suite_registry().get(name)?;
        let probes = req.probes.unwrap_or(DEFAULT_PROBES);
        if probes == 0 {
            return Err(Error::Config("--probes must be positive".into()));
        }
        let mu = req.mu.or(req.config.as_ref().and_then(|c| c.mu)).unwrap_or(0.5);
        let ctx = SuiteContext { three_body: req.three_body()?, mu, seed: req.seed(), probes };
        Ok(ScenarioOutput { trajectories: Vec::new(), reports: suite.run(&ctx) })
    }
}

/// Full against reduced flow; deviations are checked against `--tol`.
pub struct Compare;

impl Scenario for Compare {
    fn name(&self) -> &'static str {
        "compare"
    }

    fn run(&self, req: &ScenarioRequest) -> Result<ScenarioOutput> {
        let cfg = req.config()?;
        let (mu, conn, tb, integrator) = (req.mu()?, req.connection()?, req.three_body()?, req.integrator()?);
        let tol = req.tol.unwrap_or(DEFAULT_COMPARE_TOLERANCE);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Config(format!("--tol must be positive, got {tol}")));
        }
        let (r0, theta0) = match &cfg.ic {
            InitialCondition::Reduced { reduced, group } => {
                (DVector::from_column_slice(reduced), group.first().copied().unwrap_or(0.0))
            }
            InitialCondition::Full { q, v, .. } => (DVector::from_vec(vec![q[1], q[2], v[1], v[2]]), q[0]),
        };
        let (h, t_end) = (cfg.integrator.h, cfg.integrator.t_end);
        let run = compare_full_and_reduced(&tb, integrator.as_ref(), &conn, mu, &r0, theta0, h, t_end)?;
        let n = run.full.len();
        let mut out = ScenarioOutput::default();
        out.reports.push(VerificationReport::new(format!("compare/{conn}/projection"), n, run.projection_deviation, tol).with_h(h));
        out.reports.push(VerificationReport::new(format!("compare/{conn}/theta"), n, run.theta_deviation, tol).with_h(h));
        out.push("full", tb.system.dims, run.full);
        out.push("reduced", BundleDims::new(2, 0)?, run.reduced);
        out.push("reconstructed", tb.system.dims, run.reconstructed);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ScenarioConfig {
        ScenarioConfig::from_json(text).unwrap()
    }

    #[test]
    fn simulate_inline_oscillator() {
        let cfg = config(
            r#"{"system": {"inline": {"mass": [[1.0]], "stiffness": [[1.0]]}},
                "ic": {"q": [1.0], "v": [0.0]}, "integrator": {"h": 0.01, "T": 1.0}}"#,
        );
        let out = run_scenario("simulate", &ScenarioRequest { config: Some(cfg), ..Default::default() }).unwrap();
        assert!(out.pass(), "{:?}", out.reports);
        let last = out.trajectories[0].trajectory.last().unwrap();
        assert!((last[0] - 1f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn reduce_needs_mu_and_three_body() {
        let cfg = config(r#"{"system": "three_body", "ic": {"q": [0,0.3,-0.2], "v": [0,0.1,0.05]}, "integrator": {"h": 0.01, "T": 0.1}}"#);
        let req = ScenarioRequest { config: Some(cfg), ..Default::default() };
        assert!(matches!(run_scenario("reduce", &req), Err(Error::Config(_))));
        let out = run_scenario("reduce", &ScenarioRequest { mu: Some(0.5), connection: Some("A0".into()), probes: Some(5), ..req }).unwrap();
        assert!(out.pass(), "{:?}", out.reports);
        assert_eq!(out.trajectories.len(), 2);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        assert!(matches!(run_scenario("plot", &ScenarioRequest::default()), Err(Error::Config(_))));
        let req = ScenarioRequest { suite: Some("nope".into()), ..Default::default() };
        assert!(matches!(run_scenario("verify", &req), Err(Error::Config(_))));
    }

    #[test]
    fn outputs_are_written() {
        let cfg = config(r#"{"system": "three_body", "ic": {"reduced": [0.3,-0.2,0.1,0.05]}, "mu": 0.5, "integrator": {"h": 0.01, "T": 0.1}}"#);
        let out = run_scenario("compare", &ScenarioRequest { config: Some(cfg), ..Default::default() }).unwrap();
        assert!(out.pass(), "{:?}", out.reports);
        let dir = tempfile::tempdir().unwrap();
        out.write(dir.path()).unwrap();
        for f in ["full.csv", "reduced.csv", "reconstructed.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}

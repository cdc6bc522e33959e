use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use tdem_core::dynamics::{conservation_report, flow};
use tdem_core::equilibria::{find_common_axes, make_equilibrium, verify_relative_equilibrium, EquilibriumReport};
use tdem_core::stability::{certify, probe_stability, spectra_csv};
use tdem_core::Rotation;

use crate::config::Scenario;
use crate::manifest::{write_outputs, RunManifest};
use crate::CliError;

/// Residual tolerance used when verifying candidate equilibria.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibria,
    Certify,
    Probe,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::Certify => "certify",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumEntry {
    pub axis: [f64; 3],
    pub p: f64,
    /// `n·J_∞n`.
    pub limit_moment: f64,
    pub verified: bool,
    pub report: EquilibriumReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriaOutput {
    pub equilibria: Vec<EquilibriumEntry>,
    /// Finite window samples whose inertia spectrum was degenerate.
    pub degenerate_times: Vec<f64>,
    pub degenerate_limit: bool,
    pub warnings: Vec<String>,
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn simulate(s: &Scenario) -> Result<Vec<(&'static str, String)>, CliError> {
    let c = &s.config;
    let state0 = s.initial_state()?;
    let traj = flow(&c.schedule, &state0, c.window.t0, c.window.t1, c.integrator.dt)?;
    let report = conservation_report(&c.schedule, &traj)?;
    let csv = traj.resampled(&c.window.times()).to_csv(&c.schedule)?;
    Ok(vec![("trajectory.csv", csv), ("conservation.json", json(&report))])
}

fn equilibria(s: &Scenario) -> Result<Vec<(&'static str, String)>, CliError> {
    let c = &s.config;
    let search = find_common_axes(&c.schedule, &c.window)?;
    let (p, attitude) = match &c.equilibrium {
        Some(e) => (e.p, e.attitude.unwrap_or_else(Rotation::identity)),
        None => (1.0, Rotation::identity()),
    };
    let limit = c.schedule.limit();
    let mut entries = Vec::with_capacity(search.axes.len());
    for axis in &search.axes {
        let re = make_equilibrium(&c.schedule, *axis, p, attitude, &c.window)?;
        let report = verify_relative_equilibrium(&c.schedule, &re, &c.window, EQUILIBRIUM_TOL)?;
        entries.push(EquilibriumEntry {
            axis: [axis.x, axis.y, axis.z],
            p,
            limit_moment: axis.dot(&(limit * axis)),
            verified: report.passed(),
            report,
        });
    }
    let out = EquilibriaOutput {
        equilibria: entries,
        degenerate_times: search.degenerate_times.iter().copied().filter(|t| t.is_finite()).collect(),
        degenerate_limit: search.degenerate_times.iter().any(|t| t.is_infinite()),
        warnings: search.warnings,
    };
    Ok(vec![("equilibria.json", json(&out))])
}

fn certify_cmd(s: &Scenario) -> Result<Vec<(&'static str, String)>, CliError> {
    let c = &s.config;
    let re = s.relative_equilibrium()?;
    let report = certify(&c.schedule, &re, &c.window, s.chart_radius()?, s.chart_grid(), &c.margins)?;
    Ok(vec![("certificate.json", json(&report)), ("spectra.csv", spectra_csv(&report))])
}

fn probe_cmd(s: &Scenario) -> Result<Vec<(&'static str, String)>, CliError> {
    let re = s.relative_equilibrium()?;
    let report = probe_stability(&s.config.schedule, &re, &s.probe_settings()?)?;
    Ok(vec![("probe.json", json(&report)), ("excursions.csv", report.excursions_csv())])
}

/// Loads `config`, runs `command` and writes its outputs into `out` (or the configured
/// directory).
pub fn run(command: Command, config: &Path, out: Option<&Path>) -> Result<RunManifest, CliError> {
    let scenario = Scenario::load(config)?;
    let dir = scenario.out_dir(out)?;
    let start = Instant::now();
    let files = match command {
        Command::Simulate => simulate(&scenario)?,
        Command::Equilibria => equilibria(&scenario)?,
        Command::Certify => certify_cmd(&scenario)?,
        Command::Probe => probe_cmd(&scenario)?,
    };
    write_outputs(&dir, command.name(), &scenario.raw, start.elapsed().as_secs_f64(), &files)
}

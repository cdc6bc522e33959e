//! Scenario configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tdem_core::dynamics::BodyState;
use tdem_core::equilibria::make_equilibrium;
use tdem_core::stability::{DEFAULT_GRID, DEFAULT_RADIUS_FRACTION, MAX_RADIUS_FRACTION};
use tdem_core::{Error, InertiaSchedule, Margins, ProbeSettings, RelativeEquilibrium, Rotation, TimeWindow, Vec3};

use crate::CliError;

/// Either a coordinate axis `1 | 2 | 3` of the body frame or an explicit direction.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Index(usize),
    Vector([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSpec {
    pub axis: AxisSpec,
    pub p: f64,
    /// Reference attitude `Λ_e`; identity when absent.
    #[serde(default)]
    pub attitude: Option<Rotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "IntegratorSpec::default_dt")]
    pub dt: f64,
}

impl IntegratorSpec {
    fn default_dt() -> f64 {
        1e-3
    }
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec { dt: IntegratorSpec::default_dt() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    /// Body angular momentum `Π₀`.
    pub momentum: [f64; 3],
    #[serde(default)]
    pub attitude: Option<Rotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    /// Defaults to a tenth of `p`.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    pub t0_list: Vec<f64>,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "ProbeSpec::default_workers")]
    pub workers: usize,
}

impl ProbeSpec {
    fn default_workers() -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schedule: InertiaSchedule,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumSpec>,
    pub window: TimeWindow,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub initial_state: Option<InitialStateSpec>,
    #[serde(default)]
    pub chart: ChartSpec,
    #[serde(default)]
    pub margins: Margins,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn field(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config { field: field.to_string(), message: message.to_string() }
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(field(name, format!("{v} is not finite")))
    }
}

/// A parsed and validated configuration together with its raw JSON.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub raw: serde_json::Value,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| field("config", e))?;
        let config: ScenarioConfig = serde_json::from_value(raw.clone()).map_err(|e| field("config", e))?;
        let scenario = Scenario { config, raw };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        c.schedule.validate().map_err(|e| field("schedule", e))?;
        for (name, v) in [("window.t0", c.window.t0), ("window.t1", c.window.t1)] {
            finite(name, v)?;
        }
        c.window.validate().map_err(|e| field("window", e))?;
        c.schedule.check_window(&c.window).map_err(|e| field("schedule", e))?;
        let dt = finite("integrator.dt", c.integrator.dt)?;
        if dt <= 0.0 {
            return Err(field("integrator.dt", format!("{dt} must be positive")));
        }
        if let Some(s) = &c.initial_state {
            for v in s.momentum {
                finite("initial_state.momentum", v)?;
            }
        }
        if let Some(eq) = &c.equilibrium {
            let p = finite("equilibrium.p", eq.p)?;
            if p <= 0.0 {
                return Err(field("equilibrium.p", format!("{p} must be positive")));
            }
            self.axis()?;
            let radius = self.chart_radius()?;
            if !(radius > 0.0 && radius <= MAX_RADIUS_FRACTION * p) {
                return Err(field("chart.radius", format!("{radius} must lie in (0, {MAX_RADIUS_FRACTION} p]")));
            }
        }
        if self.chart_grid() == 0 {
            return Err(field("chart.grid", "must be at least 1"));
        }
        let lambda = finite("margins.lambda", c.margins.lambda)?;
        if lambda <= 0.0 {
            return Err(field("margins.lambda", format!("{lambda} must be positive")));
        }
        if let Some(upper) = c.margins.upper {
            if !(finite("margins.Lambda", upper)? > lambda) {
                return Err(field("margins.Lambda", format!("{upper} must exceed lambda = {lambda}")));
            }
        }
        if let Some(probe) = &c.probe {
            finite("probe.epsilon", probe.epsilon)?;
            finite("probe.horizon", probe.horizon)?;
            for &d in &probe.deltas {
                finite("probe.deltas", d)?;
            }
            for &t in &probe.t0_list {
                finite("probe.t0_list", t)?;
            }
            let p = c.equilibrium.as_ref().map_or(f64::INFINITY, |e| e.p);
            self.probe_settings_unchecked(probe).validate(p).map_err(|e| match e {
                Error::InvalidArgument { name: "dt", reason } => {
                    field("integrator.dt", format!("{reason} (probe horizon)"))
                }
                Error::InvalidArgument { name, reason } => field(name, reason),
                other => field("probe", other),
            })?;
        }
        Ok(())
    }

    pub fn axis(&self) -> Result<Vec3, CliError> {
        let eq = self.equilibrium()?;
        match eq.axis {
            AxisSpec::Index(i @ 1..=3) => Ok(Vec3::ith(i - 1, 1.0)),
            AxisSpec::Index(i) => Err(field("equilibrium.axis", format!("index {i} must be 1, 2 or 3"))),
            AxisSpec::Vector(v) => {
                let v = Vec3::from(v);
                if v.iter().all(|c| c.is_finite()) && v.norm() > 0.0 {
                    Ok(v)
                } else {
                    Err(field("equilibrium.axis", "must be a finite nonzero vector"))
                }
            }
        }
    }

    pub fn equilibrium(&self) -> Result<&EquilibriumSpec, CliError> {
        self.config.equilibrium.as_ref().ok_or_else(|| field("equilibrium", "required by this command"))
    }

    /// The configured relative equilibrium, checked to be principal over the window.
    pub fn relative_equilibrium(&self) -> Result<RelativeEquilibrium, CliError> {
        let eq = self.equilibrium()?;
        make_equilibrium(
            &self.config.schedule,
            self.axis()?,
            eq.p,
            eq.attitude.unwrap_or_else(Rotation::identity),
            &self.config.window,
        )
        .map_err(|e| field("equilibrium.axis", e))
    }

    pub fn chart_radius(&self) -> Result<f64, CliError> {
        match self.config.chart.radius {
            Some(r) => finite("chart.radius", r),
            None => Ok(DEFAULT_RADIUS_FRACTION * self.equilibrium()?.p),
        }
    }

    pub fn chart_grid(&self) -> usize {
        self.config.chart.grid.unwrap_or(DEFAULT_GRID)
    }

    /// `initial_state` if given, otherwise the configured equilibrium.
    pub fn initial_state(&self) -> Result<BodyState, CliError> {
        if let Some(s) = &self.config.initial_state {
            return Ok(BodyState::new(s.attitude.unwrap_or_else(Rotation::identity), Vec3::from(s.momentum)));
        }
        match &self.config.equilibrium {
            Some(_) => Ok(self.relative_equilibrium()?.state()),
            None => Err(field("initial_state", "required when no equilibrium is configured")),
        }
    }

    fn probe_settings_unchecked(&self, probe: &ProbeSpec) -> ProbeSettings {
        ProbeSettings {
            epsilon: probe.epsilon,
            deltas: probe.deltas.clone(),
            t0_list: probe.t0_list.clone(),
            horizon: probe.horizon,
            trials: probe.trials,
            dt: self.config.integrator.dt,
            seed: probe.seed,
            workers: probe.workers,
        }
    }

    pub fn probe_settings(&self) -> Result<ProbeSettings, CliError> {
        let probe = self.config.probe.as_ref().ok_or_else(|| field("probe", "required by this command"))?;
        Ok(self.probe_settings_unchecked(probe))
    }

    /// `--out` wins over the configured directory.
    pub fn out_dir(&self, cli: Option<&Path>) -> Result<PathBuf, CliError> {
        cli.map(Path::to_path_buf)
            .or_else(|| self.config.out.clone())
            .ok_or_else(|| field("out", "no output directory given"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schedule": {"kind": "constant", "inertia": [3, 2, 1]},
        "equilibrium": {"axis": 1, "p": 1},
        "window": {"t0": 0, "t1": 10, "samples": 11},
        "integrator": {"dt": 0.01}
    }"#;

    fn with(patch: &str) -> Result<Scenario, CliError> {
        let mut v: serde_json::Value = serde_json::from_str(BASE).unwrap();
        let p: serde_json::Value = serde_json::from_str(patch).unwrap();
        for (k, x) in p.as_object().unwrap() {
            v[k] = x.clone();
        }
        Scenario::parse(&v.to_string())
    }

    fn field_of(r: Result<Scenario, CliError>) -> String {
        match r {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn base_config_parses_with_defaults() {
        let s = Scenario::parse(BASE).unwrap();
        assert_eq!(s.chart_radius().unwrap(), 0.1);
        assert_eq!(s.chart_grid(), DEFAULT_GRID);
        assert_eq!(s.config.integrator.dt, 0.01);
        let mut bare: serde_json::Value = serde_json::from_str(BASE).unwrap();
        bare.as_object_mut().unwrap().remove("integrator");
        assert_eq!(Scenario::parse(&bare.to_string()).unwrap().config.integrator.dt, 1e-3);
        assert_eq!(s.config.margins, Margins::default());
        assert_eq!(s.axis().unwrap(), Vec3::x());
        assert_eq!(s.initial_state().unwrap().momentum, Vec3::x());
    }

    #[test]
    fn rejects_with_field_names() {
        assert_eq!(field_of(with(r#"{"integrator": {"dt": 0}}"#)), "integrator.dt");
        assert_eq!(field_of(with(r#"{"integrator": {"dt": -1}}"#)), "integrator.dt");
        assert_eq!(field_of(with(r#"{"equilibrium": {"axis": 4, "p": 1}}"#)), "equilibrium.axis");
        assert_eq!(field_of(with(r#"{"equilibrium": {"axis": 1, "p": 0}}"#)), "equilibrium.p");
        assert_eq!(field_of(with(r#"{"chart": {"radius": 0.95}}"#)), "chart.radius");
        assert_eq!(field_of(with(r#"{"margins": {"lambda": 0}}"#)), "margins.lambda");
        assert_eq!(field_of(with(r#"{"margins": {"lambda": 0.1, "Lambda": 0.05}}"#)), "margins.Lambda");
        assert_eq!(field_of(with(r#"{"window": {"t0": 1, "t1": 0, "samples": 3}}"#)), "window");
        assert_eq!(field_of(with(r#"{"schedule": {"kind": "constant", "inertia": [1, -1, 1]}}"#)), "schedule");
        let probe = |body: &str| with(&format!(r#"{{"probe": {body}}}"#));
        let ok = r#"{"epsilon": 0.2, "deltas": [0.1], "t0_list": [0], "horizon": 1, "trials": 2, "seed": 1}"#;
        assert!(probe(ok).is_ok());
        assert_eq!(
            field_of(probe(r#"{"epsilon": 0.2, "deltas": [0.2], "t0_list": [0], "horizon": 1, "trials": 2, "seed": 1}"#)),
            "probe.deltas"
        );
        assert_eq!(
            field_of(probe(r#"{"epsilon": 0.2, "deltas": [0.1], "t0_list": [0], "horizon": 1, "trials": 0, "seed": 1}"#)),
            "probe.trials"
        );
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert_eq!(field_of(with(r#"{"schedule": {"kind": "wobble", "inertia": [3, 2, 1]}}"#)), "config");
        assert_eq!(field_of(with(r#"{"colour": 1}"#)), "config");
        assert_eq!(field_of(Scenario::parse("{not json")), "config");
    }

    #[test]
    fn explicit_axis_and_state() {
        let s = with(r#"{"equilibrium": {"axis": [0, 0, 2], "p": 2}, "initial_state": {"momentum": [0.1, 0.2, 0.3]}}"#)
            .unwrap();
        let re = s.relative_equilibrium().unwrap();
        assert_eq!(re.body_momentum(), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(s.initial_state().unwrap().momentum, Vec3::new(0.1, 0.2, 0.3));
        let tilted = with(r#"{"equilibrium": {"axis": [1, 1, 0], "p": 1}}"#).unwrap();
        assert_eq!(field_of(tilted.relative_equilibrium().map(|_| tilted.clone())), "equilibrium.axis");
    }
}

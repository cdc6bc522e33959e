//! Almost-rigid body with prescribed time-dependent inertia.
//!
//! The phase point is body-trivialized: attitude `Λ` and body momentum `Π`, with spatial
//! momentum `π = ΛΠ`. Hamilton's equations for `h = ½ Π·J_t⁻¹Π` read
//!
//! ```text
//! Π' = Π × J_t⁻¹Π        Λ' = Λ hat(J_t⁻¹Π)
//! ```
//!
//! `Π` is advanced with classical RK4 and `Λ` with a Munthe-Kaas step that reuses the RK4
//! stage momenta, so the pair is a single coupled fourth-order step.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rk4_step_with_stages, rkmk4_attitude_step_staged, SymMatrix, TimeWindow, SYMMETRY_TOL};
use crate::so3::{mat3_to_rows, Mat3, Rotation, Vec3};

/// Λ is re-orthonormalized after this many steps.
pub const REORTHONORMALIZE_EVERY: usize = 10_000;
/// Relative tolerance for `dt` dividing the integration span.
const STEP_DIVISION_TOL: f64 = 1e-9;

mod inertia_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::so3::{mat3_from_rows, mat3_to_rows, Mat3};

    /// Accepts either a diagonal `[a, b, c]` or full rows.
    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Diagonal([f64; 3]),
        Rows([[f64; 3]; 3]),
    }

    impl From<Repr> for Mat3 {
        fn from(r: Repr) -> Mat3 {
            match r {
                Repr::Diagonal(d) => Mat3::from_diagonal(&d.into()),
                Repr::Rows(rows) => mat3_from_rows(&rows),
            }
        }
    }

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        mat3_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        Repr::deserialize(d).map(Mat3::from)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat3], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(mat3_to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat3>, D::Error> {
            Vec::<Repr>::deserialize(d).map(|v| v.into_iter().map(Mat3::from).collect())
        }
    }
}

/// Time-parametrized inertia dyadic `J_t` with a declared limit `J_∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InertiaSchedule {
    Constant {
        #[serde(with = "inertia_serde")]
        inertia: Mat3,
    },
    /// `J_t = J_∞ + e^{-κt} B`.
    ExpDecay {
        #[serde(with = "inertia_serde")]
        limit: Mat3,
        #[serde(with = "inertia_serde")]
        amplitude: Mat3,
        rate: f64,
    },
    /// Linear interpolation from `start` to `end` over `[t_start, t_end]`, clamped outside.
    LinearRamp {
        #[serde(with = "inertia_serde")]
        start: Mat3,
        #[serde(with = "inertia_serde")]
        end: Mat3,
        t_start: f64,
        t_end: f64,
    },
    /// Piecewise-linear through the knots, clamped outside; the last value is `J_∞`.
    Table {
        times: Vec<f64>,
        #[serde(with = "inertia_serde::list")]
        values: Vec<Mat3>,
    },
}

fn check_symmetric(name: &'static str, m: &Mat3) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { context: name, point: m.iter().copied().collect() });
    }
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * m.amax() {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

fn spd_inverse(m: &Mat3, t: f64) -> Result<Mat3> {
    let chol = Cholesky::new(*m).ok_or(Error::NotPositiveDefinite { t })?;
    let inv = chol.inverse();
    Ok((inv + inv.transpose()) * 0.5)
}

impl InertiaSchedule {
    pub fn constant(inertia: Mat3) -> Result<Self> {
        let s = InertiaSchedule::Constant { inertia };
        s.validate()?;
        Ok(s)
    }

    pub fn exp_decay(limit: Mat3, amplitude: Mat3, rate: f64) -> Result<Self> {
        let s = InertiaSchedule::ExpDecay { limit, amplitude, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn linear_ramp(start: Mat3, end: Mat3, t_start: f64, t_end: f64) -> Result<Self> {
        let s = InertiaSchedule::LinearRamp { start, end, t_start, t_end };
        s.validate()?;
        Ok(s)
    }

    pub fn table(times: Vec<f64>, values: Vec<Mat3>) -> Result<Self> {
        let s = InertiaSchedule::Table { times, values };
        s.validate()?;
        Ok(s)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InertiaSchedule::Constant { .. } => "constant",
            InertiaSchedule::ExpDecay { .. } => "exp_decay",
            InertiaSchedule::LinearRamp { .. } => "linear_ramp",
            InertiaSchedule::Table { .. } => "table",
        }
    }

    /// Structural checks plus positive definiteness of `J_∞`.
    pub fn validate(&self) -> Result<()> {
        match self {
            InertiaSchedule::Constant { inertia } => check_symmetric("inertia", inertia)?,
            InertiaSchedule::ExpDecay { limit, amplitude, rate } => {
                check_symmetric("limit", limit)?;
                check_symmetric("amplitude", amplitude)?;
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::invalid("rate", format!("{rate} must be positive and finite")));
                }
            }
            InertiaSchedule::LinearRamp { start, end, t_start, t_end } => {
                check_symmetric("start", start)?;
                check_symmetric("end", end)?;
                if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
                    return Err(Error::invalid("t_end", format!("need finite t_start < t_end, got {t_start}, {t_end}")));
                }
            }
            InertiaSchedule::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::invalid(
                        "values",
                        format!("{} knots but {} matrices", times.len(), values.len()),
                    ));
                }
                if !times.iter().all(|t| t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("times", "knot times must be finite and strictly increasing"));
                }
                for v in values {
                    check_symmetric("values", v)?;
                }
            }
        }
        spd_inverse(&self.limit(), f64::INFINITY)?;
        Ok(())
    }

    /// The declared limit `J_∞`.
    pub fn limit(&self) -> Mat3 {
        match self {
            InertiaSchedule::Constant { inertia } => *inertia,
            InertiaSchedule::ExpDecay { limit, .. } => *limit,
            InertiaSchedule::LinearRamp { end, .. } => *end,
            InertiaSchedule::Table { values, .. } => values[values.len() - 1],
        }
    }

    fn raw(&self, t: f64) -> Mat3 {
        if t == f64::INFINITY {
            return self.limit();
        }
        match self {
            InertiaSchedule::Constant { inertia } => *inertia,
            InertiaSchedule::ExpDecay { limit, amplitude, rate } => limit + amplitude * (-rate * t).exp(),
            InertiaSchedule::LinearRamp { start, end, t_start, t_end } => {
                let s = ((t - t_start) / (t_end - t_start)).clamp(0.0, 1.0);
                start + (end - start) * s
            }
            InertiaSchedule::Table { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[last] {
                    return values[last];
                }
                let k = times.partition_point(|&tk| tk <= t) - 1;
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + (values[k + 1] - values[k]) * s
            }
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if t.is_nan() || t == f64::NEG_INFINITY {
            Err(Error::invalid("t", format!("{t} is not a valid time")))
        } else {
            Ok(())
        }
    }

    /// `J_t`; `t = +∞` returns `J_∞`.
    pub fn inertia_at(&self, t: f64) -> Result<Mat3> {
        Self::check_time(t)?;
        let j = self.raw(t);
        Cholesky::new(j).ok_or(Error::NotPositiveDefinite { t })?;
        Ok(j)
    }

    /// `dJ_t/dt`; table and ramp kinds use the slope of the interval to the right of `t`.
    pub fn inertia_rate_at(&self, t: f64) -> Result<Mat3> {
        Self::check_time(t)?;
        if t == f64::INFINITY {
            return Ok(Mat3::zeros());
        }
        Ok(match self {
            InertiaSchedule::Constant { .. } => Mat3::zeros(),
            InertiaSchedule::ExpDecay { amplitude, rate, .. } => amplitude * (-rate * (-rate * t).exp()),
            InertiaSchedule::LinearRamp { start, end, t_start, t_end } => {
                if t >= *t_start && t < *t_end {
                    (end - start) / (t_end - t_start)
                } else {
                    Mat3::zeros()
                }
            }
            InertiaSchedule::Table { times, values } => {
                let last = times.len() - 1;
                if t < times[0] || t >= times[last] {
                    Mat3::zeros()
                } else {
                    let k = times.partition_point(|&tk| tk <= t) - 1;
                    (values[k + 1] - values[k]) / (times[k + 1] - times[k])
                }
            }
        })
    }

    /// `J_t⁻¹` by Cholesky.
    pub fn inverse_at(&self, t: f64) -> Result<Mat3> {
        Self::check_time(t)?;
        spd_inverse(&self.raw(t), t)
    }

    /// `d(J_t⁻¹)/dt = -J⁻¹ J' J⁻¹`.
    pub fn inverse_rate_at(&self, t: f64) -> Result<Mat3> {
        let inv = self.inverse_at(t)?;
        let r = -inv * self.inertia_rate_at(t)? * inv;
        Ok((r + r.transpose()) * 0.5)
    }

    /// Times where `dJ_t/dt` may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            InertiaSchedule::Constant { .. } | InertiaSchedule::ExpDecay { .. } => Vec::new(),
            InertiaSchedule::LinearRamp { t_start, t_end, .. } => vec![*t_start, *t_end],
            InertiaSchedule::Table { times, .. } => times.clone(),
        }
    }

    /// Positive definiteness at every window sample and at `J_∞`.
    pub fn check_window(&self, window: &TimeWindow) -> Result<()> {
        for t in window.times() {
            self.inertia_at(t)?;
        }
        self.inertia_at(f64::INFINITY)?;
        Ok(())
    }

    pub fn inertia_sym(&self, t: f64) -> Result<SymMatrix> {
        let j = self.inertia_at(t)?;
        Ok(SymMatrix::symmetrized(nalgebra::DMatrix::from_fn(3, 3, |r, c| j[(r, c)])))
    }
}

/// Body-trivialized phase point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub attitude: Rotation,
    pub momentum: Vec3,
}

impl BodyState {
    pub fn new(attitude: Rotation, momentum: Vec3) -> Self {
        BodyState { attitude, momentum }
    }

    /// Identity attitude.
    pub fn at_rest_frame(momentum: Vec3) -> Self {
        BodyState { attitude: Rotation::identity(), momentum }
    }
}

/// `½ Π·J_t⁻¹Π`.
pub fn hamiltonian(schedule: &InertiaSchedule, t: f64, state: &BodyState) -> Result<f64> {
    let p = state.momentum;
    Ok(0.5 * p.dot(&(schedule.inverse_at(t)? * p)))
}

/// `½ π·(Λ J_t Λ^T)⁻¹ π` with `π = ΛΠ`.
pub fn hamiltonian_spatial(schedule: &InertiaSchedule, t: f64, state: &BodyState) -> Result<f64> {
    let l = state.attitude.matrix();
    let spatial_inertia = l * schedule.inertia_at(t)? * l.transpose();
    let inv = spd_inverse(&((spatial_inertia + spatial_inertia.transpose()) * 0.5), t)?;
    let pi = momentum_map(state);
    Ok(0.5 * pi.dot(&(inv * pi)))
}

/// Body angular velocity `J_t⁻¹Π`.
pub fn angular_velocity(schedule: &InertiaSchedule, t: f64, momentum: &Vec3) -> Result<Vec3> {
    Ok(schedule.inverse_at(t)? * momentum)
}

/// `Π × J_t⁻¹Π`.
pub fn euler_field(schedule: &InertiaSchedule, t: f64, momentum: &Vec3) -> Result<Vec3> {
    Ok(momentum.cross(&angular_velocity(schedule, t, momentum)?))
}

/// Spatial momentum `ΛΠ`.
pub fn momentum_map(state: &BodyState) -> Vec3 {
    state.attitude.apply(&state.momentum)
}

/// One coupled RK4 / Munthe-Kaas step.
pub fn step(schedule: &InertiaSchedule, t: f64, state: &BodyState, dt: f64) -> Result<BodyState> {
    let inverses = [schedule.inverse_at(t)?, schedule.inverse_at(t + 0.5 * dt)?, schedule.inverse_at(t + dt)?];
    let stage_inverse = [inverses[0], inverses[1], inverses[1], inverses[2]];
    let mut stage = 0usize;
    let (momentum, points) = rk4_step_with_stages(
        |_, y: &Vec3| {
            let omega = stage_inverse[stage] * y;
            stage += 1;
            Ok(y.cross(&omega))
        },
        t,
        &state.momentum,
        dt,
    )?;
    let omegas = [
        stage_inverse[0] * points[0],
        stage_inverse[1] * points[1],
        stage_inverse[2] * points[2],
        stage_inverse[3] * points[3],
    ];
    let attitude = rkmk4_attitude_step_staged(&omegas, &state.attitude, dt)?;
    Ok(BodyState { attitude, momentum })
}

/// Number of steps of size `dt` spanning `[t0, t1]`.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("{dt} must be positive and finite")));
    }
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::invalid("t1", format!("need finite t0 <= t1, got {t0}, {t1}")));
    }
    let span = t1 - t0;
    let n = (span / dt).round();
    if (n * dt - span).abs() > STEP_DIVISION_TOL * span.max(1.0) {
        return Err(Error::invalid("dt", format!("{dt} does not divide the span {span}")));
    }
    Ok(n as usize)
}

/// Integrates from `t0` to `t1`, calling `visit` on the initial state and after every step.
/// Returns the final state.
pub fn flow_visit<F>(
    schedule: &InertiaSchedule,
    state0: &BodyState,
    t0: f64,
    t1: f64,
    dt: f64,
    mut visit: F,
) -> Result<BodyState>
where
    F: FnMut(f64, &BodyState),
{
    let n = step_count(t0, t1, dt)?;
    let mut state = *state0;
    visit(t0, &state);
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        state = step(schedule, t, &state, dt)?;
        if (k + 1) % REORTHONORMALIZE_EVERY == 0 {
            state.attitude = state.attitude.orthonormalized();
        }
        let t_next = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * dt };
        visit(t_next, &state);
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: BodyState,
}

/// Samples of a fixed-step solution, strictly increasing in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,L00,L01,L02,L10,L11,L12,L20,L21,L22,Px,Py,Pz,pix,piy,piz,h";

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        &self.samples[self.samples.len() - 1]
    }

    /// The sample closest in time to each requested `t`, in request order.
    pub fn resampled(&self, times: &[f64]) -> Trajectory {
        let t0 = self.first().t;
        let last = self.samples.len() - 1;
        let samples = times
            .iter()
            .map(|&t| {
                let k = ((t - t0) / self.dt).round().clamp(0.0, last as f64) as usize;
                self.samples[k]
            })
            .collect();
        Trajectory { dt: self.dt, samples }
    }

    /// CSV with [`TRAJECTORY_CSV_HEADER`], 17 significant digits, `\n` line ends.
    pub fn to_csv(&self, schedule: &InertiaSchedule) -> Result<String> {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let rows = mat3_to_rows(s.state.attitude.matrix());
            let pi = momentum_map(&s.state);
            let h = hamiltonian(schedule, s.t, &s.state)?;
            let mut fields = vec![s.t];
            fields.extend(rows.iter().flatten());
            fields.extend(s.state.momentum.iter());
            fields.extend(pi.iter());
            fields.push(h);
            let line: Vec<String> = fields.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Fixed-step solution on `[t0, t1]`, one sample per step.
pub fn flow(schedule: &InertiaSchedule, state0: &BodyState, t0: f64, t1: f64, dt: f64) -> Result<Trajectory> {
    let mut samples = Vec::with_capacity(step_count(t0, t1, dt)? + 1);
    flow_visit(schedule, state0, t0, t1, dt, |t, s| samples.push(TrajectorySample { t, state: *s }))?;
    Ok(Trajectory { dt, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max ‖π(t) − π(t0)‖`.
    pub momentum_drift: f64,
    /// `max |‖Π(t)‖ − ‖Π(t0)‖|`.
    pub casimir_drift: f64,
    /// `max |h(t) − h(t0)|`; only expected small for constant schedules.
    pub energy_drift: f64,
    /// `max |dh/dt − ∂h/∂t|` with `dh/dt` by centered differences over interior samples;
    /// stencils straddling a schedule breakpoint are skipped.
    pub energy_rate_residual: f64,
    pub samples: usize,
}

pub fn conservation_report(schedule: &InertiaSchedule, traj: &Trajectory) -> Result<ConservationReport> {
    let first = traj.first();
    let pi0 = momentum_map(&first.state);
    let norm0 = first.state.momentum.norm();
    let energies: Vec<f64> =
        traj.samples.iter().map(|s| hamiltonian(schedule, s.t, &s.state)).collect::<Result<_>>()?;
    let mut report = ConservationReport {
        momentum_drift: 0.0,
        casimir_drift: 0.0,
        energy_drift: 0.0,
        energy_rate_residual: 0.0,
        samples: traj.len(),
    };
    let breakpoints = schedule.breakpoints();
    for (k, s) in traj.samples.iter().enumerate() {
        report.momentum_drift = report.momentum_drift.max((momentum_map(&s.state) - pi0).norm());
        report.casimir_drift = report.casimir_drift.max((s.state.momentum.norm() - norm0).abs());
        report.energy_drift = report.energy_drift.max((energies[k] - energies[0]).abs());
        if k > 0 && k + 1 < traj.len() {
            let prev = &traj.samples[k - 1];
            let next = &traj.samples[k + 1];
            if breakpoints.iter().any(|&b| b > prev.t && b < next.t) {
                continue;
            }
            let observed = (energies[k + 1] - energies[k - 1]) / (next.t - prev.t);
            let p = s.state.momentum;
            let analytic = 0.5 * p.dot(&(schedule.inverse_rate_at(s.t)? * p));
            report.energy_rate_residual = report.energy_rate_residual.max((observed - analytic).abs());
        }
    }
    Ok(report)
}

/// A point of the reduced sphere, represented by its body momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedPoint(pub Vec3);

impl ReducedPoint {
    pub fn momentum(&self) -> &Vec3 {
        &self.0
    }

    pub fn radius(&self) -> f64 {
        self.0.norm()
    }
}

/// The isotropy orbit of `(Λ, Π)` is `{(gΛ, Π) : gΛΠ = ΛΠ}`, so `Π` labels it.
pub fn reduce(state: &BodyState) -> ReducedPoint {
    ReducedPoint(state.momentum)
}

/// Relative radius mismatch accepted by [`reduced_distance`].
pub const RADIUS_MATCH_TOL: f64 = 1e-6;

/// Great-circle distance on the momentum sphere.
pub fn reduced_distance(p: &ReducedPoint, q: &ReducedPoint) -> Result<f64> {
    let (a, b) = (p.radius(), q.radius());
    if (a - b).abs() > RADIUS_MATCH_TOL * a.max(b) {
        return Err(Error::RadiusMismatch { a, b });
    }
    let angle = p.0.cross(&q.0).norm().atan2(p.0.dot(&q.0));
    Ok(0.5 * (a + b) * angle)
}

/// Orthographic chart of the momentum sphere centered at `Π_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereChart {
    center: Vec3,
    radius: f64,
    normal: Vec3,
    e1: Vec3,
    e2: Vec3,
}

impl SphereChart {
    pub fn new(center: Vec3) -> Result<Self> {
        let radius = center.norm();
        if !radius.is_finite() {
            return Err(Error::NonFinite { context: "chart center", point: center.iter().copied().collect() });
        }
        if radius == 0.0 {
            return Err(Error::ZeroMomentum);
        }
        let normal = center / radius;
        let mut least = 0;
        for i in 1..3 {
            if normal[i].abs() < normal[least].abs() {
                least = i;
            }
        }
        let a = Vec3::ith(least, 1.0);
        let e1 = (a - normal * a.dot(&normal)).normalize();
        let e2 = normal.cross(&e1);
        Ok(SphereChart { center, radius, normal, e1, e2 })
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    /// Tangent basis `[e1, e2]`; `{e1, e2, n}` is right-handed.
    pub fn basis(&self) -> [Vec3; 2] {
        [self.e1, self.e2]
    }

    fn check_domain(&self, x: &[f64; 2]) -> Result<f64> {
        let rho2 = x[0] * x[0] + x[1] * x[1];
        if !(rho2 < self.radius * self.radius) {
            return Err(Error::OutsideChart { x1: x[0], x2: x[1], radius: self.radius });
        }
        Ok(rho2)
    }

    /// `from_chart(x) − Π_e`, evaluated without cancellation near the center.
    pub fn displacement(&self, x: &[f64; 2]) -> Result<Vec3> {
        let rho2 = self.check_domain(x)?;
        let r = self.radius;
        let drop = rho2 / ((r * r - rho2).sqrt() + r);
        Ok(self.e1 * x[0] + self.e2 * x[1] - self.normal * drop)
    }

    pub fn from_chart(&self, x: &[f64; 2]) -> Result<Vec3> {
        Ok(self.center + self.displacement(x)?)
    }

    pub fn to_chart(&self, momentum: &Vec3) -> Result<[f64; 2]> {
        let b = momentum.norm();
        if (b - self.radius).abs() > RADIUS_MATCH_TOL * self.radius.max(b) {
            return Err(Error::RadiusMismatch { a: self.radius, b });
        }
        let d = momentum - self.center;
        let x = [d.dot(&self.e1), d.dot(&self.e2)];
        if momentum.dot(&self.normal) <= 0.0 {
            return Err(Error::OutsideChart { x1: x[0], x2: x[1], radius: self.radius });
        }
        Ok(x)
    }
}

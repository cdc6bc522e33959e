//! Energy-momentum stability certificates and empirical Lyapunov probes.
//!
//! Coordinates on `T_{z_e}P` are `(δπ, δθ) ∈ R³ × R³` along the curve
//! `Λ_ε = exp(ε hat(δθ)) Λ_e`, `π_ε = π_e + ε δπ`. On the reduced sphere the function studied is
//!
//! ```text
//! H(t, Π) = ½ Π·J_t⁻¹Π − ½ Π_e·J_t⁻¹Π_e
//! ```
//!
//! in the orthographic chart of [`SphereChart`]. All matrices `M(t)` carry the factor ½.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    euler_field, flow_visit, momentum_map, reduced_distance, step_count, BodyState, InertiaSchedule, ReducedPoint,
    SphereChart,
};
use crate::equilibria::RelativeEquilibrium;
use crate::error::{Error, Result};
use crate::numerics::{
    ball_grid, fd_hessian, rk4_step, sym_eigen, third_derivative_bound, SymMatrix, TimeWindow, FD_STEP,
    FD_STEP_THIRD,
};
use crate::so3::{exp_minus_identity_apply, hat_matrix, Mat3, Vec3};

/// Eigenvalues with magnitude below this count as zero.
pub const SIGN_ZERO_TOL: f64 = 1e-10;
/// Strict inequalities against user margins need at least this much room.
pub const STRICT_MARGIN: f64 = 1e-12;
/// `ε` step of the second-variation oracle.
pub const ORACLE_STEP: f64 = 1e-4;
pub const DEFAULT_GRID: usize = 9;
/// Chart radius as a fraction of `p` when none is given.
pub const DEFAULT_RADIUS_FRACTION: f64 = 0.1;
/// Largest admissible chart radius as a fraction of `p`; leaves room for difference stencils.
pub const MAX_RADIUS_FRACTION: f64 = 0.9;
const LPDF_ANGLES: usize = 16;
const MAX_REPORTED_VIOLATIONS: usize = 32;

/// `H`, `∂H/∂t` and the chart, frozen at one time.
struct ReducedEnergy {
    chart: SphereChart,
    body: Vec3,
    inverse: Mat3,
    inverse_rate: Mat3,
}

impl ReducedEnergy {
    fn new(schedule: &InertiaSchedule, re: &RelativeEquilibrium, t: f64) -> Result<Self> {
        Ok(ReducedEnergy {
            chart: SphereChart::new(re.body_momentum())?,
            body: re.body_momentum(),
            inverse: schedule.inverse_at(t)?,
            inverse_rate: schedule.inverse_rate_at(t)?,
        })
    }

    /// `½ d·J⁻¹(2Π_e + d)` for a displacement `d = Π − Π_e`.
    fn value_of(&self, d: &Vec3) -> f64 {
        0.5 * d.dot(&(self.inverse * (self.body * 2.0 + d)))
    }

    fn rate_of(&self, d: &Vec3) -> f64 {
        0.5 * d.dot(&(self.inverse_rate * (self.body * 2.0 + d)))
    }

    fn value(&self, x: &[f64; 2]) -> Result<f64> {
        Ok(self.value_of(&self.chart.displacement(x)?))
    }

    fn rate(&self, x: &[f64; 2]) -> Result<f64> {
        Ok(self.rate_of(&self.chart.displacement(x)?))
    }

    /// Total function for difference stencils; leaving the chart yields NaN.
    fn value_or_nan(&self, x: &[f64]) -> f64 {
        self.value(&[x[0], x[1]]).unwrap_or(f64::NAN)
    }
}

/// `H_{z_e}(t, x)` in the orthographic chart centered at `Π_e`.
pub fn reduced_energy(schedule: &InertiaSchedule, t: f64, re: &RelativeEquilibrium, x: &[f64; 2]) -> Result<f64> {
    ReducedEnergy::new(schedule, re, t)?.value(x)
}

/// `∂H_{z_e}/∂t (t, x) = ½ Π·(dJ⁻¹/dt)Π − ½ Π_e·(dJ⁻¹/dt)Π_e`.
pub fn reduced_energy_rate(schedule: &InertiaSchedule, t: f64, re: &RelativeEquilibrium, x: &[f64; 2]) -> Result<f64> {
    ReducedEnergy::new(schedule, re, t)?.rate(x)
}

/// Second variation of `h_ξ` at `z_e` in `(δπ, δθ)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondVariation {
    pub t: f64,
    pub matrix: SymMatrix,
}

impl SecondVariation {
    pub fn bilinear(&self, v: &[f64; 6], w: &[f64; 6]) -> f64 {
        self.matrix.bilinear(v, w)
    }

    pub fn quadratic_form(&self, v: &[f64; 6]) -> f64 {
        self.matrix.quadratic_form(v)
    }
}

/// Concatenates `(δπ, δθ)`.
pub fn direction(delta_pi: &Vec3, delta_theta: &Vec3) -> [f64; 6] {
    [delta_pi.x, delta_pi.y, delta_pi.z, delta_theta.x, delta_theta.y, delta_theta.z]
}

fn split(v: &[f64; 6]) -> (Vec3, Vec3) {
    (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
}

fn spatial_inverse(schedule: &InertiaSchedule, re: &RelativeEquilibrium, t: f64) -> Result<Mat3> {
    let l = re.attitude().matrix();
    let m = l * schedule.inverse_at(t)? * l.transpose();
    Ok((m + m.transpose()) * 0.5)
}

/// `λ` with `ξ(t) = λ π_e`.
fn xi_coefficient(re: &RelativeEquilibrium, t: f64) -> Result<f64> {
    let pi = re.momentum();
    Ok(re.xi(t)?.dot(&pi) / pi.norm_squared())
}

/// ```text
/// [ A              (A − λ)π̂_e        ]
/// [ −π̂_e(A − λ)    −π̂_e(A − λ)π̂_e    ]      A = Λ_e J_t⁻¹ Λ_e^T
/// ```
pub fn second_variation(schedule: &InertiaSchedule, t: f64, re: &RelativeEquilibrium) -> Result<SecondVariation> {
    let a = spatial_inverse(schedule, re, t)?;
    let b = a - Mat3::identity() * xi_coefficient(re, t)?;
    let p = hat_matrix(&re.momentum());
    let blocks = [[a, b * p], [-p * b, -p * b * p]];
    let m = DMatrix::from_fn(6, 6, |r, c| blocks[r / 3][c / 3][(r % 3, c % 3)]);
    Ok(SecondVariation { t, matrix: SymMatrix::symmetrized(m) })
}

/// `d²/dε² h_ξ(Λ_ε, π_ε)` at `ε = 0` by a central second difference with step [`ORACLE_STEP`].
///
/// Increments `h_ξ(z_ε) − h_ξ(z_e)` are formed without cancellation.
pub fn second_variation_fd_oracle(
    schedule: &InertiaSchedule,
    t: f64,
    re: &RelativeEquilibrium,
    delta_pi: &Vec3,
    delta_theta: &Vec3,
) -> Result<f64> {
    let inverse = schedule.inverse_at(t)?;
    let xi = re.xi(t)?;
    let spatial = re.momentum();
    let body = re.body_momentum();
    let lt = re.attitude().transpose();
    let increment = |eps: f64| {
        let dp = delta_pi * eps;
        let d_spatial = exp_minus_identity_apply(&(delta_theta * -eps), &(spatial + dp)) + dp;
        let d = lt.apply(&d_spatial);
        0.5 * d.dot(&(inverse * (body * 2.0 + d))) - dp.dot(&xi)
    };
    let h = ORACLE_STEP;
    let value = (increment(h) + increment(-h)) / (h * h);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { context: "second-variation oracle", point: direction(delta_pi, delta_theta).to_vec() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    /// `δ²h_ξ(η_P, v)` from the assembled matrix.
    pub lhs: f64,
    /// `T J(v)·(η × ξ(t))`.
    pub rhs: f64,
    pub residual: f64,
}

/// Equivariance identity `δ²h_ξ(η_P(z_e), v) = ⟨T_{z_e}J(v), [η, ξ(t)]⟩`.
pub fn equivariance_identity_check(
    schedule: &InertiaSchedule,
    t: f64,
    re: &RelativeEquilibrium,
    eta: &Vec3,
    v: &[f64; 6],
) -> Result<IdentityCheck> {
    let s = second_variation(schedule, t, re)?;
    let fundamental = direction(&eta.cross(&re.momentum()), eta);
    let lhs = s.bilinear(&fundamental, v);
    let (delta_pi, _) = split(v);
    let rhs = delta_pi.dot(&eta.cross(&re.xi(t)?));
    Ok(IdentityCheck { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Rotation generators whose body displacement of `Π_e` is the chart basis vector `e_a`:
/// `θ_a = Λ_e (e_a × n) / p`.
fn chart_generators(re: &RelativeEquilibrium) -> Result<[Vec3; 2]> {
    let chart = SphereChart::new(re.body_momentum())?;
    let n = *chart.normal();
    Ok(chart.basis().map(|e| re.attitude().apply(&e.cross(&n)) / re.p()))
}

/// `½ δ²h_ξ` restricted to `δπ = 0` and the chart-adapted rotation directions.
///
/// These directions span a complement of the isotropy direction `(0, π_e)` inside the
/// momentum level set, and map onto the chart coordinate vectors, so the result is the
/// matrix of `M(t)` in the same chart as [`reduced_chart_hessian`].
pub fn restricted_form(schedule: &InertiaSchedule, t: f64, re: &RelativeEquilibrium) -> Result<SymMatrix> {
    let s = second_variation(schedule, t, re)?;
    let w = chart_generators(re)?.map(|theta| direction(&Vec3::zeros(), &theta));
    let m = DMatrix::from_fn(2, 2, |a, b| 0.5 * s.bilinear(&w[a], &w[b]));
    Ok(SymMatrix::symmetrized(m))
}

/// `½ ∂²H/∂x_i∂x_j` at the chart origin by central differences.
pub fn reduced_chart_hessian(schedule: &InertiaSchedule, t: f64, re: &RelativeEquilibrium) -> Result<SymMatrix> {
    let energy = ReducedEnergy::new(schedule, re, t)?;
    let h = fd_hessian(|x| energy.value_or_nan(x), &[0.0, 0.0], FD_STEP)?;
    Ok(SymMatrix::symmetrized(h.into_matrix() * 0.5))
}

fn eigen2(m: &SymMatrix) -> [f64; 2] {
    let e = sym_eigen(m).eigenvalues;
    [e[0], e[1]]
}

fn check_chart(re: &RelativeEquilibrium, chart_radius: f64, grid: usize) -> Result<()> {
    if !(chart_radius > 0.0 && chart_radius <= MAX_RADIUS_FRACTION * re.p()) {
        return Err(Error::invalid(
            "chart.radius",
            format!("{chart_radius} must lie in (0, {MAX_RADIUS_FRACTION} p] with p = {}", re.p()),
        ));
    }
    if grid == 0 {
        return Err(Error::invalid("chart.grid", "must be at least 1"));
    }
    Ok(())
}

/// Extremes of `∂H/∂t` over the chart ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtCondition {
    pub max: f64,
    pub min: f64,
}

/// Evaluates `∂H/∂t` on [`ball_grid`] points at every window sample. The limit `t = ∞` has
/// zero rate by construction and is not sampled.
pub fn dt_condition(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    chart_radius: f64,
    grid: usize,
) -> Result<DtCondition> {
    check_chart(re, chart_radius, grid)?;
    let points = ball_grid(&[0.0, 0.0], chart_radius, grid);
    let mut out = DtCondition { max: f64::NEG_INFINITY, min: f64::INFINITY };
    for t in window.times() {
        let energy = ReducedEnergy::new(schedule, re, t)?;
        for x in &points {
            let r = energy.rate(&[x[0], x[1]])?;
            out.max = out.max.max(r);
            out.min = out.min.min(r);
        }
    }
    Ok(out)
}

/// User margins: `lambda` is the strict lower bound demanded of the restricted spectrum;
/// `Lambda`, when present, is an upper bound the spectrum must stay below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    #[serde(default = "Margins::default_lambda")]
    pub lambda: f64,
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl Margins {
    fn default_lambda() -> f64 {
        1e-6
    }
}

impl Default for Margins {
    fn default() -> Self {
        Margins { lambda: Margins::default_lambda(), upper: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    UniformlyStableCertified,
    StableCertified,
    NotCertified,
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        !matches!(self, Verdict::NotCertified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AsymptoticStatus {
    NotApplicable,
    Certified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCheck {
    pub status: AsymptoticStatus,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub t: f64,
    pub eigenvalues: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub window: TimeWindow,
    pub chart_radius: f64,
    pub grid: usize,
    pub margins: Margins,
    /// Restricted spectra at the window samples, ascending.
    pub spectra: Vec<SpectrumSample>,
    /// Restricted spectrum at `J_∞`.
    pub limit_spectrum: [f64; 2],
    pub lambda_inf: f64,
    #[serde(rename = "Lambda_sup")]
    pub lambda_sup: f64,
    pub sign_mode: SignMode,
    pub c_bound: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub asymptotic: AsymptoticCheck,
}

fn sign_mode_of<'a>(eigenvalues: impl Iterator<Item = &'a f64>) -> SignMode {
    let (mut pos, mut neg) = (true, true);
    for &e in eigenvalues {
        pos &= e > SIGN_ZERO_TOL;
        neg &= e < -SIGN_ZERO_TOL;
    }
    match (pos, neg) {
        (true, _) => SignMode::PositiveDefinite,
        (_, true) => SignMode::NegativeDefinite,
        _ => SignMode::Indefinite,
    }
}

/// Decides stability of `[z_e]` from the restricted spectra over the window plus `J_∞`, the
/// sign of `∂H/∂t` on the chart ball, and the third-derivative constant `c`.
///
/// A negative-definite form is handled by certifying `−H`.
pub fn certify(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    chart_radius: f64,
    grid: usize,
    margins: &Margins,
) -> Result<CertificateReport> {
    window.validate()?;
    check_chart(re, chart_radius, grid)?;
    if !(margins.lambda > 0.0 && margins.lambda.is_finite()) {
        return Err(Error::invalid("margins.lambda", format!("{} must be positive", margins.lambda)));
    }
    let times = window.times();
    let mut spectra = Vec::with_capacity(times.len());
    for &t in &times {
        spectra.push(SpectrumSample { t, eigenvalues: eigen2(&restricted_form(schedule, t, re)?) });
    }
    let limit_spectrum = eigen2(&restricted_form(schedule, f64::INFINITY, re)?);
    let all = || spectra.iter().flat_map(|s| s.eigenvalues.iter()).chain(limit_spectrum.iter());
    let lambda_inf = all().fold(f64::INFINITY, |m, &e| m.min(e));
    let lambda_sup = all().fold(f64::NEG_INFINITY, |m, &e| m.max(e));
    let sign_mode = sign_mode_of(all());

    let mut c_bound = 0.0f64;
    for &t in times.iter().chain(std::iter::once(&f64::INFINITY)) {
        let energy = ReducedEnergy::new(schedule, re, t)?;
        c_bound = c_bound.max(third_derivative_bound(
            |x| energy.value_or_nan(x),
            &[0.0, 0.0],
            chart_radius,
            grid,
            FD_STEP_THIRD,
        )?);
    }
    let dt = dt_condition(schedule, re, window, chart_radius, grid)?;

    let mut reasons = Vec::new();
    let mut ok = true;
    // (orientation, inf and sup of the spectrum of the certified function)
    let oriented = match sign_mode {
        SignMode::Indefinite => {
            reasons.push(format!(
                "indefinite restricted form: eigenvalues range over [{lambda_inf:e}, {lambda_sup:e}]"
            ));
            ok = false;
            None
        }
        SignMode::PositiveDefinite => Some((1.0, lambda_inf, lambda_sup)),
        SignMode::NegativeDefinite => {
            reasons.push("negative-definite restricted form: certifying -H".to_string());
            Some((-1.0, -lambda_sup, -lambda_inf))
        }
    };
    if let Some((orientation, low, high)) = oriented {
        if low > margins.lambda + STRICT_MARGIN {
            reasons.push(format!("spectral lower bound {low:e} exceeds margin {:e}", margins.lambda));
        } else {
            reasons.push(format!("spectral lower bound {low:e} does not exceed margin {:e}", margins.lambda));
            ok = false;
        }
        let worst_rate = if orientation > 0.0 { dt.max } else { -dt.min };
        if worst_rate <= 0.0 {
            reasons.push(format!("time-derivative condition holds: max of the certified function's rate is {worst_rate:e}"));
        } else {
            reasons.push(format!(
                "time-derivative condition fails: the certified function grows at rate up to {worst_rate:e}"
            ));
            ok = false;
        }
        if c_bound.is_finite() {
            reasons.push(format!("third-derivative constant c = {c_bound:e}"));
        } else {
            reasons.push("third-derivative constant is not finite".to_string());
            ok = false;
        }
        if ok {
            if let Some(upper) = margins.upper {
                if high >= upper {
                    reasons.push(format!("spectral upper bound {high:e} is not below Lambda = {upper:e}"));
                }
            }
        }
    }
    let verdict = if !ok {
        Verdict::NotCertified
    } else {
        match (oriented, margins.upper) {
            (Some((_, _, high)), Some(upper)) if high >= upper => Verdict::StableCertified,
            _ => Verdict::UniformlyStableCertified,
        }
    };
    let asymptotic = asymptotic_check(schedule, re, window, chart_radius, verdict, oriented.map(|o| o.0))?;
    Ok(CertificateReport {
        window: *window,
        chart_radius,
        grid,
        margins: *margins,
        spectra,
        limit_spectrum,
        lambda_inf,
        lambda_sup,
        sign_mode,
        c_bound,
        dt_max: dt.max,
        dt_min: dt.min,
        verdict,
        reasons,
        asymptotic,
    })
}

/// Asymptotic stability needs `−Ṁ` locally positive definite; probed on the innermost shell.
fn asymptotic_check(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    chart_radius: f64,
    verdict: Verdict,
    orientation: Option<f64>,
) -> Result<AsymptoticCheck> {
    let orientation = match (verdict.is_certified(), orientation) {
        (true, Some(o)) => o,
        _ => {
            return Ok(AsymptoticCheck {
                status: AsymptoticStatus::NotApplicable,
                reason: "stability is not certified".to_string(),
            })
        }
    };
    let radius = chart_radius / DEFAULT_GRID as f64;
    let mut times = window.times();
    times.push(f64::INFINITY);
    for t in times {
        let energy = ReducedEnergy::new(schedule, re, t)?;
        for k in 0..LPDF_ANGLES {
            let phi = TAU * k as f64 / LPDF_ANGLES as f64;
            let x = [radius * phi.cos(), radius * phi.sin()];
            let decay = -orientation * energy.rate(&x)?;
            if !(decay > 0.0) {
                return Ok(AsymptoticCheck {
                    status: AsymptoticStatus::NotApplicable,
                    reason: format!(
                        "-dM/dt is not positive on the shell of radius {radius:e} (value {decay:e} at t = {t})"
                    ),
                });
            }
        }
    }
    Ok(AsymptoticCheck {
        status: AsymptoticStatus::Certified,
        reason: format!("-dM/dt is positive on the shell of radius {radius:e} at every sample"),
    })
}

/// `t,ev1,ev2` rows for every window sample, then the limit as `t = inf`.
pub fn spectra_csv(report: &CertificateReport) -> String {
    let mut out = String::from("t,ev1,ev2\n");
    for s in &report.spectra {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", s.t, s.eigenvalues[0], s.eigenvalues[1]));
    }
    out.push_str(&format!("inf,{:.16e},{:.16e}\n", report.limit_spectrum[0], report.limit_spectrum[1]));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpdfViolation {
    pub t: f64,
    pub x: [f64; 2],
    /// `V(t, x) / ‖x‖²`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpdfReport {
    /// `+1` when checking `H`, `−1` when checking `−H`.
    pub orientation: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub upper: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Smallest `λ' ≥ 0` with `V ≤ (Λ + λ')‖x‖²` at every sample.
    pub observed_slack: f64,
    pub violation_count: usize,
    pub violations: Vec<LpdfViolation>,
}

impl LpdfReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Samples `V = ±H` on `grid` concentric shells of 16 points and checks
/// `λ‖x‖² ≤ V(t, x) ≤ (Λ + λ')‖x‖²`. The sign is that of the definite form at `t0`.
pub fn lpdf_and_decrescent_check(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    chart_radius: f64,
    grid: usize,
    lambda: f64,
    upper: f64,
) -> Result<LpdfReport> {
    check_chart(re, chart_radius, grid)?;
    let orientation = match sign_mode_of(eigen2(&restricted_form(schedule, window.t0, re)?).iter()) {
        SignMode::NegativeDefinite => -1.0,
        _ => 1.0,
    };
    let mut report = LpdfReport {
        orientation,
        lambda,
        upper,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        observed_slack: 0.0,
        violation_count: 0,
        violations: Vec::new(),
    };
    for t in window.times() {
        let energy = ReducedEnergy::new(schedule, re, t)?;
        for shell in 1..=grid {
            let r = chart_radius * shell as f64 / grid as f64;
            for k in 0..LPDF_ANGLES {
                let phi = TAU * k as f64 / LPDF_ANGLES as f64;
                let x = [r * phi.cos(), r * phi.sin()];
                let ratio = orientation * energy.value(&x)? / (r * r);
                report.min_ratio = report.min_ratio.min(ratio);
                report.max_ratio = report.max_ratio.max(ratio);
                report.observed_slack = report.observed_slack.max(ratio - upper);
                if !(ratio >= lambda) {
                    report.violation_count += 1;
                    if report.violations.len() < MAX_REPORTED_VIOLATIONS {
                        report.violations.push(LpdfViolation { t, x, ratio });
                    }
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdotSample {
    pub t: f64,
    /// Centered difference of `H` along the trajectory.
    pub observed: f64,
    /// `∂H/∂t` at the trajectory point.
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdotReport {
    pub series: Vec<MdotSample>,
    pub max_residual: f64,
}

/// `dH/dt` along the flow from `state0`, against `∂H/∂t`. Stencils straddling a schedule
/// breakpoint are skipped.
pub fn mdot_along_flow(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    state0: &BodyState,
    window: &TimeWindow,
    dt: f64,
) -> Result<MdotReport> {
    let offset = (momentum_map(state0) - re.momentum()).norm();
    if offset > 1e-9 * re.p() {
        return Err(Error::invalid(
            "state0",
            format!("spatial momentum differs from the equilibrium's by {offset:e}"),
        ));
    }
    let body = re.body_momentum();
    let mut points: Vec<(f64, Vec3)> = Vec::new();
    flow_visit(schedule, state0, window.t0, window.t1, dt, |t, s| points.push((t, s.momentum)))?;
    let h_of = |t: f64, m: &Vec3| -> Result<(f64, f64)> {
        let inv = schedule.inverse_at(t)?;
        let rate = schedule.inverse_rate_at(t)?;
        let d = m - body;
        let sum = body * 2.0 + d;
        Ok((0.5 * d.dot(&(inv * sum)), 0.5 * d.dot(&(rate * sum))))
    };
    let values: Vec<(f64, f64)> = points.iter().map(|(t, m)| h_of(*t, m)).collect::<Result<_>>()?;
    let breakpoints = schedule.breakpoints();
    let mut report = MdotReport { series: Vec::new(), max_residual: 0.0 };
    for k in 1..points.len().saturating_sub(1) {
        let (t_prev, t, t_next) = (points[k - 1].0, points[k].0, points[k + 1].0);
        if breakpoints.iter().any(|&b| b > t_prev && b < t_next) {
            continue;
        }
        let observed = (values[k + 1].0 - values[k - 1].0) / (t_next - t_prev);
        let analytic = values[k].1;
        report.max_residual = report.max_residual.max((observed - analytic).abs());
        report.series.push(MdotSample { t, observed, analytic });
    }
    Ok(report)
}

/// Parameters of an empirical stability probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    pub t0_list: Vec<f64>,
    pub horizon: f64,
    pub trials: usize,
    pub dt: f64,
    pub seed: u64,
    pub workers: usize,
}

impl ProbeSettings {
    pub fn validate(&self, p: f64) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("probe.epsilon", format!("{} must be positive", self.epsilon)));
        }
        if self.deltas.is_empty() {
            return Err(Error::invalid("probe.deltas", "at least one radius is required"));
        }
        for &d in &self.deltas {
            if !(d >= 0.0 && d < self.epsilon) {
                return Err(Error::invalid("probe.deltas", format!("{d} must lie in [0, epsilon)")));
            }
            if d > std::f64::consts::PI * p {
                return Err(Error::invalid("probe.deltas", format!("{d} exceeds half the sphere circumference")));
            }
        }
        if self.t0_list.is_empty() || !self.t0_list.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("probe.t0_list", "needs at least one finite start time"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("probe.horizon", format!("{} must be positive", self.horizon)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("probe.trials", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("probe.workers", "must be at least 1"));
        }
        step_count(0.0, self.horizon, self.dt)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeCell {
    pub t0: f64,
    pub delta: f64,
    pub worst_excursion: f64,
    pub passed: bool,
    /// Per-trial excursions in trial order.
    #[serde(skip)]
    pub excursions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeVerdict {
    /// One tested `δ` keeps every trial inside `ε` for every `t0`.
    ConsistentWithUniformlyStable,
    /// Every `t0` has some `δ` keeping its trials inside `ε`.
    ConsistentWithStable,
    /// Some `t0` has an escaping trial for every tested `δ`.
    RefutedAtHorizon,
}

impl ProbeVerdict {
    pub fn is_consistent_with_stable(&self) -> bool {
        !matches!(self, ProbeVerdict::RefutedAtHorizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub epsilon: f64,
    pub seed: u64,
    pub trials: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Ordered by `t0` index, then `δ` index.
    pub cells: Vec<ProbeCell>,
    pub worst_excursion: f64,
    pub verdict: ProbeVerdict,
}

impl ProbeReport {
    /// `t0,delta,trial,excursion` rows.
    pub fn excursions_csv(&self) -> String {
        let mut out = String::from("t0,delta,trial,excursion\n");
        for c in &self.cells {
            for (k, e) in c.excursions.iter().enumerate() {
                out.push_str(&format!("{:.16e},{:.16e},{k},{:.16e}\n", c.t0, c.delta, e));
            }
        }
        out
    }
}

/// Initial body momentum uniform on the spherical cap of geodesic radius `delta` about `Π_e`.
fn sample_cap(chart: &SphereChart, delta: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    let p = chart.radius();
    let half = (0.5 * delta / p).sin();
    let cap_height = 2.0 * half * half;
    let one_minus_cos = rng.random::<f64>() * cap_height;
    let cos_a = 1.0 - one_minus_cos;
    let sin_a = (one_minus_cos * (1.0 + cos_a)).sqrt();
    let phi = TAU * rng.random::<f64>();
    let [e1, e2] = chart.basis();
    (chart.normal() * cos_a + (e1 * phi.cos() + e2 * phi.sin()) * sin_a) * p
}

/// Maximum reduced distance from `Π_e` along the reduced flow on `[t0, t0 + horizon]`.
fn excursion(
    schedule: &InertiaSchedule,
    target: &ReducedPoint,
    start: Vec3,
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let steps = step_count(t0, t0 + horizon, dt)?;
    let mut x = start;
    let mut worst = reduced_distance(&ReducedPoint(x), target)?;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        x = rk4_step(|s, y: &Vec3| euler_field(schedule, s, y), t, &x, dt)?;
        worst = worst.max(reduced_distance(&ReducedPoint(x), target)?);
    }
    Ok(worst)
}

/// Empirical test of the stability definitions up to a finite horizon.
///
/// Trial `k` of cell `c` draws from ChaCha8 seeded with `seed` on stream `(c << 32) | k`, so
/// results do not depend on `workers` or scheduling.
pub fn probe_stability(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    settings: &ProbeSettings,
) -> Result<ProbeReport> {
    settings.validate(re.p())?;
    let chart = SphereChart::new(re.body_momentum())?;
    let target = ReducedPoint(re.body_momentum());
    let n_delta = settings.deltas.len();
    let n_cells = settings.t0_list.len() * n_delta;
    let units: Vec<(usize, usize)> =
        (0..n_cells).flat_map(|c| (0..settings.trials).map(move |k| (c, k))).collect();
    let run = |&(cell, trial): &(usize, usize)| -> Result<f64> {
        let t0 = settings.t0_list[cell / n_delta];
        let delta = settings.deltas[cell % n_delta];
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(((cell as u64) << 32) | trial as u64);
        let start = sample_cap(&chart, delta, &mut rng);
        excursion(schedule, &target, start, t0, settings.horizon, settings.dt)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::invalid("probe.workers", e.to_string()))?;
    let results: Vec<Result<f64>> = pool.install(|| units.par_iter().map(run).collect());
    let excursions: Vec<f64> = results.into_iter().collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let chunk = excursions[c * settings.trials..(c + 1) * settings.trials].to_vec();
        let worst = chunk.iter().fold(0.0f64, |m, &e| m.max(e));
        cells.push(ProbeCell {
            t0: settings.t0_list[c / n_delta],
            delta: settings.deltas[c % n_delta],
            worst_excursion: worst,
            passed: worst < settings.epsilon,
            excursions: chunk,
        });
    }
    let n_t0 = settings.t0_list.len();
    let refuted = (0..n_t0).any(|i| cells[i * n_delta..(i + 1) * n_delta].iter().all(|c| !c.passed));
    let uniform = (0..n_delta).any(|j| (0..n_t0).all(|i| cells[i * n_delta + j].passed));
    let verdict = if refuted {
        ProbeVerdict::RefutedAtHorizon
    } else if uniform {
        ProbeVerdict::ConsistentWithUniformlyStable
    } else {
        ProbeVerdict::ConsistentWithStable
    };
    let worst_excursion = cells.iter().fold(0.0f64, |m, c| m.max(c.worst_excursion));
    Ok(ProbeReport {
        epsilon: settings.epsilon,
        seed: settings.seed,
        trials: settings.trials,
        horizon: settings.horizon,
        dt: settings.dt,
        cells,
        worst_excursion,
        verdict,
    })
}

/// Counts of positive, negative and zero eigenvalues.
pub fn sign_pattern(eigenvalues: &[f64]) -> (usize, usize, usize) {
    let pos = eigenvalues.iter().filter(|&&e| e > SIGN_ZERO_TOL).count();
    let neg = eigenvalues.iter().filter(|&&e| e < -SIGN_ZERO_TOL).count();
    (pos, neg, eigenvalues.len() - pos - neg)
}

/// A random chart change `R(φ₁) diag(s₁, s₂) R(φ₂)`, optionally reflected, with
/// `s_i` log-uniform in `[0.1, 10]`.
pub fn random_chart_change(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let rot = |phi: f64| DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
    let ln_range = 10f64.ln();
    let s1 = (rng.random_range(-1.0..1.0) * ln_range).exp();
    let s2 = (rng.random_range(-1.0..1.0) * ln_range).exp();
    let reflect = if rng.random::<bool>() { -1.0 } else { 1.0 };
    let scale = DMatrix::from_row_slice(2, 2, &[s1, 0.0, 0.0, reflect * s2]);
    rot(TAU * rng.random::<f64>()) * scale * rot(TAU * rng.random::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartInvarianceReport {
    pub transforms: usize,
    pub samples: usize,
    pub preserved: usize,
    pub total: usize,
    /// Cases where a positive-definite `M` gave `λ'_inf < λ_inf σ_min(A)²`.
    pub bound_violations: usize,
    pub max_condition: f64,
}

impl ChartInvarianceReport {
    pub fn passed(&self) -> bool {
        self.preserved == self.total && self.bound_violations == 0
    }
}

/// Compares the sign pattern of `M(t)` and `A^T M(t) A` for random invertible `A`.
pub fn chart_invariance_check(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    n_transforms: usize,
    seed: u64,
) -> Result<ChartInvarianceReport> {
    let forms: Vec<SymMatrix> =
        window.times().into_iter().map(|t| restricted_form(schedule, t, re)).collect::<Result<_>>()?;
    let base: Vec<[f64; 2]> = forms.iter().map(eigen2).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ChartInvarianceReport {
        transforms: n_transforms,
        samples: forms.len(),
        preserved: 0,
        total: 0,
        bound_violations: 0,
        max_condition: 0.0,
    };
    for _ in 0..n_transforms {
        let a = random_chart_change(&mut rng);
        let gram = eigen2(&SymMatrix::symmetrized(a.transpose() * &a));
        report.max_condition = report.max_condition.max((gram[1] / gram[0]).sqrt());
        for (m, ev) in forms.iter().zip(&base) {
            let moved = eigen2(&m.congruence(&a));
            report.total += 1;
            if sign_pattern(&moved) == sign_pattern(ev) {
                report.preserved += 1;
            }
            if ev[0] > SIGN_ZERO_TOL && moved[0] < ev[0] * gram[0] * (1.0 - 1e-12) {
                report.bound_violations += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::equilibria::make_equilibrium;
    use crate::so3::{exp_so3, Rotation};

    fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(a, b, c))
    }

    fn rigid() -> InertiaSchedule {
        InertiaSchedule::constant(diag(3.0, 2.0, 1.0)).unwrap()
    }

    fn decay() -> InertiaSchedule {
        InertiaSchedule::exp_decay(diag(3.0, 2.0, 1.0), Mat3::identity(), 1.0).unwrap()
    }

    fn window() -> TimeWindow {
        TimeWindow::new(0.0, 10.0, 11).unwrap()
    }

    fn eq(s: &InertiaSchedule, axis: usize) -> RelativeEquilibrium {
        make_equilibrium(s, Vec3::ith(axis, 1.0), 1.0, Rotation::identity(), &window()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn second_variation_blocks() {
        let s = rigid();
        let sv = second_variation(&s, 0.0, &eq(&s, 2)).unwrap();
        let m = sv.matrix.matrix();
        let upper = [1.0 / 3.0, 0.5, 1.0];
        let lower = [-0.5, -2.0 / 3.0, 0.0];
        for i in 0..3 {
            for j in 0..3 {
                let (u, l) = if i == j { (upper[i], lower[i]) } else { (0.0, 0.0) };
                assert!(close(m[(i, j)], u, 1e-15) && close(m[(i + 3, j + 3)], l, 1e-15), "{m}");
            }
        }
        let kernel = direction(&Vec3::zeros(), &Vec3::z());
        assert_eq!(sv.quadratic_form(&kernel), 0.0);
    }

    #[test]
    fn oracle_examples() {
        let s = rigid();
        let re = eq(&s, 2);
        let v = second_variation_fd_oracle(&s, 0.0, &re, &Vec3::z(), &Vec3::zeros()).unwrap();
        assert!(close(v, 1.0, 1e-8), "{v}");
        let k = second_variation_fd_oracle(&s, 0.0, &re, &Vec3::zeros(), &re.momentum()).unwrap();
        assert!(k.abs() <= 1e-8, "{k}");
    }

    #[test]
    fn oracle_matches_block_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in [rigid(), decay()] {
            for axis in 0..3 {
                let re = eq(&s, axis).transported(&exp_so3(&Vec3::new(0.4, -0.9, 0.2)));
                for &t in &[0.0, 1.5, 7.0] {
                    let sv = second_variation(&s, t, &re).unwrap();
                    let scale = sv.matrix.matrix().norm();
                    for _ in 0..20 {
                        let v: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0f64..1.0));
                        let (dp, dth) = split(&v);
                        let oracle = second_variation_fd_oracle(&s, t, &re, &dp, &dth).unwrap();
                        let exact = sv.quadratic_form(&v);
                        let norm2: f64 = v.iter().map(|c| c * c).sum();
                        assert!((oracle - exact).abs() <= 1e-6 * scale * norm2, "{oracle} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_examples() {
        let s = decay();
        let re = eq(&s, 0);
        let t = 2.0;
        // tangent to the level set: δπ = 0
        let r = equivariance_identity_check(&s, t, &re, &Vec3::new(0.3, 0.1, -0.7), &direction(&Vec3::zeros(), &Vec3::new(1.0, 2.0, 3.0)))
            .unwrap();
        assert!(r.lhs.abs() <= 1e-8 && r.rhs == 0.0);
        let r = equivariance_identity_check(&s, t, &re, &re.xi(t).unwrap(), &[0.3, -0.2, 0.5, 0.1, 0.9, -0.4]).unwrap();
        assert!(r.rhs.abs() <= 1e-15 && r.lhs.abs() <= 1e-8);
        let r = equivariance_identity_check(&s, t, &re, &Vec3::new(0.0, 1.0, 0.5), &[0.3, -0.2, 0.5, 0.1, 0.9, -0.4]).unwrap();
        assert!(r.rhs.abs() > 1e-3 && r.residual <= 1e-12);
    }

    #[test]
    fn restricted_form_examples() {
        let s = rigid();
        let m = eigen2(&restricted_form(&s, 0.0, &eq(&s, 0)).unwrap());
        assert!(close(m[0], 1.0 / 12.0, 1e-14) && close(m[1], 1.0 / 3.0, 1e-14), "{m:?}");
        let m = eigen2(&restricted_form(&s, 0.0, &eq(&s, 2)).unwrap());
        assert!(close(m[0], -1.0 / 3.0, 1e-14) && close(m[1], -0.25, 1e-14), "{m:?}");
        let m = eigen2(&restricted_form(&s, 0.0, &eq(&s, 1)).unwrap());
        assert!(m[0] < 0.0 && m[1] > 0.0);
    }

    #[test]
    fn chart_hessian_examples() {
        let s = rigid();
        let m = reduced_chart_hessian(&s, 0.0, &eq(&s, 0)).unwrap();
        assert!(close(m.get(0, 0), 1.0 / 12.0, 1e-6) && close(m.get(1, 1), 1.0 / 3.0, 1e-6) && m.get(0, 1).abs() < 1e-6);
        let later = reduced_chart_hessian(&s, 9.0, &eq(&s, 0)).unwrap();
        assert_eq!(m, later);
    }

    #[test]
    fn dt_condition_examples() {
        let s = rigid();
        let d = dt_condition(&s, &eq(&s, 0), &window(), 0.1, 9).unwrap();
        assert_eq!((d.max, d.min), (0.0, 0.0));
        let e = decay();
        let d = dt_condition(&e, &eq(&e, 0), &window(), 0.1, 1).unwrap();
        assert_eq!((d.max, d.min), (0.0, 0.0));
        let d = dt_condition(&e, &eq(&e, 0), &window(), 0.1, 9).unwrap();
        assert!(d.max > 0.0 && d.min >= 0.0, "{d:?}");
        assert!(dt_condition(&e, &eq(&e, 0), &window(), 0.95, 9).is_err());
    }

    #[test]
    fn certify_classical_axes() {
        let s = rigid();
        let m = Margins::default();
        let r = certify(&s, &eq(&s, 0), &window(), 0.1, 9, &m).unwrap();
        assert_eq!(r.verdict, Verdict::UniformlyStableCertified, "{:?}", r.reasons);
        assert!(close(r.lambda_inf, 1.0 / 12.0, 1e-12) && close(r.lambda_sup, 1.0 / 3.0, 1e-12));
        assert_eq!(r.sign_mode, SignMode::PositiveDefinite);
        assert!(r.c_bound.is_finite() && r.c_bound > 0.0);
        assert_eq!(r.asymptotic.status, AsymptoticStatus::NotApplicable);
        let r = certify(&s, &eq(&s, 2), &window(), 0.1, 9, &m).unwrap();
        assert_eq!(r.sign_mode, SignMode::NegativeDefinite);
        assert_eq!(r.verdict, Verdict::UniformlyStableCertified, "{:?}", r.reasons);
        let r = certify(&s, &eq(&s, 1), &window(), 0.1, 9, &m).unwrap();
        assert_eq!(r.verdict, Verdict::NotCertified);
        assert!(r.reasons.iter().any(|x| x.contains("indefinite")));
    }

    #[test]
    fn certify_margins() {
        let s = rigid();
        let re = eq(&s, 0);
        let high = Margins { lambda: 0.1, upper: None };
        assert_eq!(certify(&s, &re, &window(), 0.1, 9, &high).unwrap().verdict, Verdict::NotCertified);
        let tight = Margins { lambda: 1e-6, upper: Some(0.2) };
        assert_eq!(certify(&s, &re, &window(), 0.1, 9, &tight).unwrap().verdict, Verdict::StableCertified);
        let loose = Margins { lambda: 1e-6, upper: Some(0.5) };
        assert_eq!(certify(&s, &re, &window(), 0.1, 9, &loose).unwrap().verdict, Verdict::UniformlyStableCertified);
        assert!(certify(&s, &re, &window(), 0.1, 9, &Margins { lambda: 0.0, upper: None }).is_err());
    }

    #[test]
    fn certificate_json_field_names() {
        let s = rigid();
        let r = certify(&s, &eq(&s, 1), &window(), 0.1, 3, &Margins::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["lambda_inf", "Lambda_sup", "sign_mode", "c_bound", "dt_max", "dt_min", "verdict", "reasons"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["verdict"], "not-certified");
        assert_eq!(v["sign_mode"], "indefinite");
        let csv = spectra_csv(&r);
        assert!(csv.starts_with("t,ev1,ev2\n") && csv.lines().last().unwrap().starts_with("inf,"));
        assert_eq!(csv.lines().count(), 13);
    }

    #[test]
    fn lpdf_examples() {
        let s = rigid();
        let re = eq(&s, 0);
        let r = lpdf_and_decrescent_check(&s, &re, &window(), 0.1, 5, 1.0 / 24.0, 1.0 / 3.0).unwrap();
        assert!(r.passed() && r.observed_slack < 1e-2, "{r:?}");
        let r = lpdf_and_decrescent_check(&s, &re, &window(), 0.1, 5, 1.0 / 6.0, 1.0 / 3.0).unwrap();
        assert!(!r.passed());
        let r = lpdf_and_decrescent_check(&s, &re, &window(), 1e-4, 3, 1.0 / 12.0 * 0.99, 1.0 / 3.0).unwrap();
        assert!(r.passed() && r.observed_slack < 1e-6);
        let r = lpdf_and_decrescent_check(&s, &eq(&s, 2), &window(), 0.1, 5, 0.1, 1.0 / 3.0).unwrap();
        assert_eq!(r.orientation, -1.0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn mdot_examples() {
        let s = rigid();
        let re = eq(&s, 0);
        let near = BodyState::at_rest_frame(Vec3::new(0.99, 0.1, (1.0f64 - 0.99 * 0.99 - 0.01).sqrt()));
        let start = BodyState::new(rotation_onto(&near.momentum, &re.momentum()), near.momentum);
        let w = TimeWindow::new(0.0, 5.0, 2).unwrap();
        let r = mdot_along_flow(&s, &re, &start, &w, 1e-3).unwrap();
        assert!(r.max_residual <= 1e-8, "{}", r.max_residual);
        let e = decay();
        let re = eq(&e, 0);
        let r = mdot_along_flow(&e, &re, &start, &w, 1e-3).unwrap();
        assert!(r.max_residual <= 1e-6, "{}", r.max_residual);
        assert!(r.series.iter().any(|m| m.analytic.abs() > 1e-4));
        let r = mdot_along_flow(&e, &re, &re.state(), &w, 1e-3).unwrap();
        assert!(r.series.iter().all(|m| m.observed == 0.0 && m.analytic == 0.0));
        assert!(mdot_along_flow(&e, &re, &BodyState::at_rest_frame(Vec3::y()), &w, 1e-3).is_err());
    }

    /// A rotation taking `from` to `to` (same length, not antipodal).
    fn rotation_onto(from: &Vec3, to: &Vec3) -> Rotation {
        let axis = from.cross(to);
        let angle = axis.norm().atan2(from.dot(to));
        exp_so3(&(axis.normalize() * angle))
    }

    fn probe(axis: usize, deltas: Vec<f64>, workers: usize) -> ProbeReport {
        let s = rigid();
        let settings = ProbeSettings {
            epsilon: 0.3,
            deltas,
            t0_list: vec![0.0],
            horizon: 200.0,
            trials: 4,
            dt: 1e-2,
            seed: 42,
            workers,
        };
        probe_stability(&s, &eq(&s, axis), &settings).unwrap()
    }

    #[test]
    fn probe_examples() {
        let stable = probe(0, vec![0.05], 2);
        assert!(stable.verdict.is_consistent_with_stable(), "{stable:?}");
        assert!(stable.worst_excursion < 0.3);
        let unstable = probe(1, vec![0.05], 2);
        assert_eq!(unstable.verdict, ProbeVerdict::RefutedAtHorizon);
        assert!(unstable.worst_excursion > 1.0);
        let still = probe(1, vec![0.0], 1);
        assert_eq!(still.worst_excursion, 0.0);
        assert_eq!(probe(0, vec![0.05], 1), probe(0, vec![0.05], 3));
    }

    #[test]
    fn probe_validation() {
        let s = rigid();
        let mut bad = ProbeSettings {
            epsilon: 0.3,
            deltas: vec![0.3],
            t0_list: vec![0.0],
            horizon: 1.0,
            trials: 1,
            dt: 0.1,
            seed: 0,
            workers: 1,
        };
        assert!(probe_stability(&s, &eq(&s, 0), &bad).is_err());
        bad.deltas = vec![0.1];
        bad.trials = 0;
        assert!(probe_stability(&s, &eq(&s, 0), &bad).is_err());
    }

    #[test]
    fn cap_samples_stay_inside() {
        let chart = SphereChart::new(Vec3::new(0.0, 2.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = sample_cap(&chart, 0.2, &mut rng);
            let d = reduced_distance(&ReducedPoint(p), &ReducedPoint(*chart.center())).unwrap();
            assert!(d < 0.2 && (p.norm() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn chart_invariance_examples() {
        let s = rigid();
        let m = restricted_form(&s, 0.0, &eq(&s, 0)).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(eigen2(&m.congruence(&id)), eigen2(&m));
        let four = eigen2(&m.congruence(&(id * 2.0)));
        let base = eigen2(&m);
        assert!(close(four[0], 4.0 * base[0], 1e-14) && close(four[1], 4.0 * base[1], 1e-14));
        let r = chart_invariance_check(&s, &eq(&s, 0), &window(), 50, 5).unwrap();
        assert!(r.passed() && r.preserved == 50 * 11, "{r:?}");
        assert!(r.max_condition <= 100.0);
    }

    fn spd() -> impl Strategy<Value = Mat3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, 0.5..4.0f64, 0.5..4.0f64, 0.5..4.0f64).prop_map(|(a, b, c, x, y, z)| {
            let r = exp_so3(&Vec3::new(a, b, c));
            let m = r.matrix() * diag(x, y, z) * r.matrix().transpose();
            (m + m.transpose()) * 0.5
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn restricted_form_matches_chart_hessian(j in spd(), axis in 0usize..3, p in 0.5..3.0f64) {
            let s = InertiaSchedule::constant(j).unwrap();
            let n = crate::equilibria::find_common_axes(&s, &window()).unwrap().axes;
            prop_assume!(n.len() == 3);
            let re = make_equilibrium(&s, n[axis], p, exp_so3(&Vec3::new(0.1, 0.2, 0.3)), &window()).unwrap();
            let a = restricted_form(&s, 0.0, &re).unwrap();
            let b = reduced_chart_hessian(&s, 0.0, &re).unwrap();
            prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-6, "{} vs {}", a.matrix(), b.matrix());
        }

        #[test]
        fn kernel_direction_vanishes(j in spd(), axis in 0usize..3, t in 0.0..10.0f64) {
            let s = InertiaSchedule::exp_decay(j, j * 0.2 + Mat3::identity() * 0.1, 0.7).unwrap();
            let n = crate::equilibria::find_common_axes(&s, &window()).unwrap().axes;
            prop_assume!(n.len() == 3);
            let re = eq_at(&s, n[axis]);
            let sv = second_variation(&s, t, &re).unwrap();
            let k = direction(&Vec3::zeros(), &re.momentum());
            prop_assert!(sv.quadratic_form(&k).abs() <= 1e-10);
        }
    }

    fn eq_at(s: &InertiaSchedule, axis: Vec3) -> RelativeEquilibrium {
        RelativeEquilibrium::new_unchecked(s.clone(), Rotation::identity(), axis, 1.0).unwrap()
    }
}

//! Time-dependent relative equilibria of the almost-rigid body.
//!
//! An equilibrium is a spin about a direction `n` that is a principal axis of `J_t` for every
//! `t`. With attitude `Λ_e` and magnitude `p`, the spatial momentum is `π_e = p Λ_e n` and the
//! generator is `ξ(t) = λ_t π_e` with `λ_t = 1 / (n·J_t n)`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow_visit, hamiltonian, momentum_map, BodyState, InertiaSchedule};
use crate::error::{Error, Result};
use crate::numerics::{fd_gradient, sym_eigen, SymMatrix, TimeWindow, FD_STEP};
use crate::so3::{exp_so3, Mat3, Rotation, Vec3};

/// Relative tolerance on `‖J u − (u·J u) u‖ / ‖J‖` for `u` to count as principal.
pub const PRINCIPAL_TOL: f64 = 1e-9;
/// Relative eigenvalue gap below which a sample counts as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;
/// Number of built-in orbit rotations.
pub const ORBIT_SAMPLES: usize = 64;

fn principal_residual(j: &Mat3, u: &Vec3) -> f64 {
    let ju = j * u;
    (ju - u * u.dot(&ju)).norm() / j.norm()
}

/// Flips `v` so that its first component of magnitude above `1e-12` is positive.
pub fn canonical_sign(v: Vec3) -> Vec3 {
    match v.iter().find(|c| c.abs() > 1e-12) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

fn eigen3(j: &Mat3) -> (Vec<f64>, Vec<Vec3>) {
    let s = sym_eigen(&SymMatrix::symmetrized(DMatrix::from_fn(3, 3, |r, c| j[(r, c)])));
    let vecs = (0..3).map(|i| Vec3::from_iterator(s.eigenvector(i).iter().copied())).collect();
    (s.eigenvalues, vecs)
}

fn is_degenerate(eigenvalues: &[f64]) -> bool {
    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eigenvalues.windows(2).any(|w| w[1] - w[0] < DEGENERACY_GAP * scale)
}

/// Common principal axes over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSearch {
    /// Sorted by decreasing moment `u·J_∞u`, ties by the moment at the first sample.
    pub axes: Vec<Vec3>,
    /// Sample times (including `inf`) whose spectrum was degenerate.
    pub degenerate_times: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Directions that are eigenvectors of `J_t` at every window sample and of `J_∞`.
///
/// Candidates come from the first sample with a simple spectrum and are then checked against
/// every sample, degenerate or not.
pub fn find_common_axes(schedule: &InertiaSchedule, window: &TimeWindow) -> Result<AxisSearch> {
    let mut times = window.times();
    times.push(f64::INFINITY);
    let mut inertias = Vec::with_capacity(times.len());
    let mut degenerate_times = Vec::new();
    let mut candidates: Option<Vec<Vec3>> = None;
    for &t in &times {
        let j = schedule.inertia_at(t)?;
        let (values, vectors) = eigen3(&j);
        if is_degenerate(&values) {
            degenerate_times.push(t);
        } else if candidates.is_none() {
            candidates = Some(vectors);
        }
        inertias.push(j);
    }
    let mut warnings = Vec::new();
    if !degenerate_times.is_empty() {
        warnings.push(format!(
            "degenerate inertia spectrum at {} of {} samples; axes were taken from non-degenerate samples",
            degenerate_times.len(),
            times.len()
        ));
    }
    let candidates = match candidates {
        Some(c) => c,
        None => {
            warnings.push(
                "every sample is degenerate; the reported axes are one orthonormal choice inside a degenerate eigenspace"
                    .to_string(),
            );
            eigen3(&inertias[0]).1
        }
    };
    let limit = schedule.limit();
    let mut axes: Vec<Vec3> = candidates
        .into_iter()
        .filter(|u| inertias.iter().all(|j| principal_residual(j, u) <= PRINCIPAL_TOL))
        .map(canonical_sign)
        .collect();
    let first = inertias[0];
    let moment = |j: &Mat3, u: &Vec3| u.dot(&(j * u));
    axes.sort_by(|a, b| {
        let (la, lb) = (moment(&limit, a), moment(&limit, b));
        if (la - lb).abs() <= DEGENERACY_GAP * la.abs().max(lb.abs()) {
            moment(&first, b).total_cmp(&moment(&first, a))
        } else {
            lb.total_cmp(&la)
        }
    });
    Ok(AxisSearch { axes, degenerate_times, warnings })
}

/// Spin about a common principal axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEquilibrium {
    schedule: InertiaSchedule,
    attitude: Rotation,
    axis: Vec3,
    p: f64,
    generator_scale: f64,
}

impl RelativeEquilibrium {
    /// No principal-axis check; `axis` is normalized.
    pub fn new_unchecked(schedule: InertiaSchedule, attitude: Rotation, axis: Vec3, p: f64) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("axis", "must be a finite nonzero vector"));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid("p", format!("{p} must be positive and finite")));
        }
        Ok(RelativeEquilibrium { schedule, attitude, axis: axis / norm, p, generator_scale: 1.0 })
    }

    /// Replaces `ξ(t)` by `k ξ(t)`; for exercising the verifiers.
    pub fn with_generator_scale(mut self, k: f64) -> Self {
        self.generator_scale = k;
        self
    }

    /// The same equilibrium moved along its group orbit: `Λ_e → gΛ_e`, `π_e → gπ_e`, `ξ → gξ`.
    pub fn transported(&self, g: &Rotation) -> Self {
        let mut out = self.clone();
        out.attitude = (*g * self.attitude).orthonormalized();
        out
    }

    pub fn schedule(&self) -> &InertiaSchedule {
        &self.schedule
    }

    pub fn attitude(&self) -> &Rotation {
        &self.attitude
    }

    /// Unit body-frame axis `n`.
    pub fn axis(&self) -> &Vec3 {
        &self.axis
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `Π_e = p n`.
    pub fn body_momentum(&self) -> Vec3 {
        self.axis * self.p
    }

    /// `π_e = Λ_e Π_e`.
    pub fn momentum(&self) -> Vec3 {
        self.attitude.apply(&self.body_momentum())
    }

    pub fn state(&self) -> BodyState {
        BodyState::new(self.attitude, self.body_momentum())
    }

    /// `λ_t = 1 / (n·J_t n)`.
    pub fn lambda(&self, t: f64) -> Result<f64> {
        let j = self.schedule.inertia_at(t)?;
        Ok(1.0 / self.axis.dot(&(j * self.axis)))
    }

    /// `ξ(t) = λ_t π_e`.
    pub fn xi(&self, t: f64) -> Result<Vec3> {
        Ok(self.momentum() * (self.generator_scale * self.lambda(t)?))
    }

    /// Spatial inverse inertia `I_{t,e}⁻¹ = Λ_e J_t⁻¹ Λ_e^T`.
    pub fn spatial_inverse_inertia(&self, t: f64) -> Result<Mat3> {
        let l = self.attitude.matrix();
        let m = l * self.schedule.inverse_at(t)? * l.transpose();
        Ok((m + m.transpose()) * 0.5)
    }
}

/// Checks `axis` against every window sample and `J_∞`.
pub fn make_equilibrium(
    schedule: &InertiaSchedule,
    axis: Vec3,
    p: f64,
    attitude: Rotation,
    window: &TimeWindow,
) -> Result<RelativeEquilibrium> {
    let re = RelativeEquilibrium::new_unchecked(schedule.clone(), attitude, axis, p)?;
    let mut times = window.times();
    times.push(f64::INFINITY);
    for t in times {
        let residual = principal_residual(&schedule.inertia_at(t)?, re.axis());
        if residual > PRINCIPAL_TOL {
            return Err(Error::NotPrincipal { t, residual });
        }
    }
    Ok(re)
}

/// `h_t(z) − (J(z) − μ_e)·ξ_t`.
pub fn h_xi(schedule: &InertiaSchedule, t: f64, state: &BodyState, xi: &Vec3, mu_e: &Vec3) -> Result<f64> {
    Ok(hamiltonian(schedule, t, state)? - (momentum_map(state) - mu_e).dot(xi))
}

/// The state on the variation curve `Λ = exp(hat(δθ))Λ_e`, `π = π_e + δπ`.
pub fn perturbed_state(re: &RelativeEquilibrium, delta_pi: &Vec3, delta_theta: &Vec3) -> BodyState {
    let attitude = exp_so3(delta_theta) * *re.attitude();
    let momentum = attitude.transpose().apply(&(re.momentum() + delta_pi));
    BodyState::new(attitude, momentum)
}

/// Analytic first variation of `h_ξ` at `z_e`, as coefficients of `(δπ, δθ)`:
/// `I⁻¹π_e − ξ` and `(I⁻¹π_e) × π_e`.
pub fn first_variation(re: &RelativeEquilibrium, t: f64) -> Result<(Vec3, Vec3)> {
    let pi_e = re.momentum();
    let omega = re.spatial_inverse_inertia(t)? * pi_e;
    Ok((omega - re.xi(t)?, omega.cross(&pi_e)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub quantity: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSample {
    pub t: f64,
    /// Norm of the finite-difference gradient of `h_ξ` in `(δπ, δθ)`.
    pub gradient: f64,
    /// `‖I⁻¹π_e − ξ_t‖`.
    pub generator: f64,
    /// `‖(I⁻¹π_e) × π_e‖`.
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub tol: f64,
    pub samples: Vec<EquilibriumSample>,
    pub max_gradient: f64,
    pub max_generator: f64,
    pub max_alignment: f64,
    /// First sample exceeding `tol`, if any.
    pub violation: Option<Violation>,
}

impl EquilibriumReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

pub fn verify_relative_equilibrium(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    tol: f64,
) -> Result<EquilibriumReport> {
    let mu_e = re.momentum();
    let mut report = EquilibriumReport {
        tol,
        samples: Vec::new(),
        max_gradient: 0.0,
        max_generator: 0.0,
        max_alignment: 0.0,
        violation: None,
    };
    for t in window.times() {
        let xi = re.xi(t)?;
        let f = |v: &[f64]| {
            let s = perturbed_state(re, &Vec3::new(v[0], v[1], v[2]), &Vec3::new(v[3], v[4], v[5]));
            h_xi(schedule, t, &s, &xi, &mu_e).unwrap_or(f64::NAN)
        };
        let grad = fd_gradient(f, &[0.0; 6], FD_STEP)?;
        let gradient = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let omega = {
            let l = re.attitude().matrix();
            l * schedule.inverse_at(t)? * l.transpose() * mu_e
        };
        let generator = (omega - xi).norm();
        let alignment = omega.cross(&mu_e).norm();
        report.max_gradient = report.max_gradient.max(gradient);
        report.max_generator = report.max_generator.max(generator);
        report.max_alignment = report.max_alignment.max(alignment);
        if report.violation.is_none() {
            for (quantity, residual) in [("gradient", gradient), ("generator", generator), ("alignment", alignment)] {
                if !(residual <= tol) {
                    report.violation = Some(Violation { t, quantity, residual });
                    break;
                }
            }
        }
        report.samples.push(EquilibriumSample { t, gradient, generator, alignment });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitReport {
    pub tol: f64,
    /// `max ‖Π(t) − Π_e‖`.
    pub max_reduced_excursion: f64,
    /// `max ‖Λ(t)Λ_e^T u − u‖` with `u = π_e / p`.
    pub max_axis_residual: f64,
    pub violation: Option<Violation>,
}

impl OrbitReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Flows from `z_e` over the window and checks that the motion stays on the isotropy orbit.
pub fn orbit_reconstruction_check(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    window: &TimeWindow,
    dt: f64,
    tol: f64,
) -> Result<OrbitReport> {
    let body = re.body_momentum();
    let u = re.momentum() / re.p();
    let lt = re.attitude().matrix().transpose();
    let mut report = OrbitReport { tol, max_reduced_excursion: 0.0, max_axis_residual: 0.0, violation: None };
    flow_visit(schedule, &re.state(), window.t0, window.t1, dt, |t, s| {
        let excursion = (s.momentum - body).norm();
        let axis = (s.attitude.matrix() * lt * u - u).norm();
        report.max_reduced_excursion = report.max_reduced_excursion.max(excursion);
        report.max_axis_residual = report.max_axis_residual.max(axis);
        if report.violation.is_none() {
            if !(excursion <= tol) {
                report.violation = Some(Violation { t, quantity: "reduced excursion", residual: excursion });
            } else if !(axis <= tol) {
                report.violation = Some(Violation { t, quantity: "axis", residual: axis });
            }
        }
    })?;
    Ok(report)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Deterministic low-discrepancy rotations: Halton points in bases 2, 3, 5 pushed through
/// Shoemake's uniform quaternion map.
pub fn orbit_rotations(n: usize) -> Vec<Rotation> {
    (1..=n as u64)
        .map(|i| {
            let (u1, u2, u3) = (radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5));
            let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
            let q = Quaternion::new(b * (TAU * u3).cos(), a * (TAU * u2).sin(), a * (TAU * u2).cos(), b * (TAU * u3).sin());
            Rotation::from_unit_quaternion(&UnitQuaternion::from_quaternion(q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoliatedCheckReport {
    pub tol: f64,
    pub group_samples: usize,
    pub isotropy_samples: usize,
    pub times: Vec<f64>,
    /// `max |X − f₁Y|` over orbit points and times.
    pub max_colinearity: f64,
    /// `max |f₁(h z') − f₁(z')|` over isotropy rotations `h` about `μ'`.
    pub max_first_integral_variation: f64,
    /// `(t, f₁(t, z_e))`; equals `λ_t p`.
    pub coefficient_at_equilibrium: Vec<(f64, f64)>,
    pub violation: Option<Violation>,
}

impl FoliatedCheckReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Phase velocity `(vee(Λ'Λ^T), Π')` at a state.
fn phase_velocity(schedule: &InertiaSchedule, t: f64, s: &BodyState) -> Result<(Vec3, Vec3)> {
    let omega = schedule.inverse_at(t)? * s.momentum;
    Ok((s.attitude.apply(&omega), s.momentum.cross(&omega)))
}

/// Coefficient `f₁ = X·Y/|Y|²` and residual `|X − f₁Y|` against `Y = (μ'/p, 0)`.
fn decompose(schedule: &InertiaSchedule, t: f64, s: &BodyState, p: f64) -> Result<(f64, f64)> {
    let (rot, mom) = phase_velocity(schedule, t, s)?;
    let y = momentum_map(s) / p;
    let f1 = rot.dot(&y) / y.norm_squared();
    let residual = ((rot - y * f1).norm_squared() + mom.norm_squared()).sqrt();
    Ok((f1, residual))
}

const ISOTROPY_ANGLES: usize = 8;

/// On the orbit `G z_e` the dynamics is `f₁(t, z) Y₁(z)`, with `Y₁` the fundamental field of
/// the unit isotropy generator and `f₁` invariant under the isotropy rotations.
pub fn foliated_structure_check(
    schedule: &InertiaSchedule,
    re: &RelativeEquilibrium,
    n_group_samples: usize,
    window: &TimeWindow,
    tol: f64,
) -> Result<FoliatedCheckReport> {
    if re.momentum().norm() == 0.0 {
        return Err(Error::ZeroMomentum);
    }
    let p = re.p();
    let times = window.times();
    let group = orbit_rotations(n_group_samples);
    let mut report = FoliatedCheckReport {
        tol,
        group_samples: group.len(),
        isotropy_samples: ISOTROPY_ANGLES,
        times: times.clone(),
        max_colinearity: 0.0,
        max_first_integral_variation: 0.0,
        coefficient_at_equilibrium: Vec::new(),
        violation: None,
    };
    for &t in &times {
        report.coefficient_at_equilibrium.push((t, decompose(schedule, t, &re.state(), p)?.0));
        for g in &group {
            let z = re.transported(g).state();
            let (f1, residual) = decompose(schedule, t, &z, p)?;
            let mu = momentum_map(&z) / p;
            let mut variation = 0.0f64;
            for k in 1..=ISOTROPY_ANGLES {
                let h = exp_so3(&(mu * (TAU * k as f64 / ISOTROPY_ANGLES as f64)));
                let moved = BodyState::new(h * z.attitude, z.momentum);
                variation = variation.max((decompose(schedule, t, &moved, p)?.0 - f1).abs());
            }
            report.max_colinearity = report.max_colinearity.max(residual);
            report.max_first_integral_variation = report.max_first_integral_variation.max(variation);
            if report.violation.is_none() {
                if !(residual <= tol) {
                    report.violation = Some(Violation { t, quantity: "colinearity", residual });
                } else if !(variation <= tol) {
                    report.violation = Some(Violation { t, quantity: "first-integral variation", residual: variation });
                }
            }
        }
    }
    Ok(report)
}

//! Small dense numerical kernels shared by the rest of the crate.
//!
//! Everything here is deterministic: reductions run in index order, the eigen
//! solver has a fixed sweep order and a fixed eigenvector sign convention.

use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{exp_so3, Rotation, Vec3};

/// Default central-difference step for gradients and Hessians.
pub const FD_STEP: f64 = 1e-5;
/// Default step for third differences.
pub const FD_STEP_THIRD: f64 = 1e-3;
/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Jacobi sweeps stop once the off-diagonal Frobenius norm drops below this fraction of `|A|`.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Symmetric dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("matrix", format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "symmetric matrix", point: m.iter().copied().collect() });
        }
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * m.amax() {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(SymMatrix(m))
    }

    /// Takes the symmetric part `(m + m^T) / 2` without checking.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `v^T A w`.
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        let n = self.dim();
        assert!(v.len() == n && w.len() == n, "dimension mismatch");
        v.iter()
            .enumerate()
            .map(|(i, vi)| vi * w.iter().enumerate().map(|(j, wj)| self.0[(i, j)] * wj).sum::<f64>())
            .sum()
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    /// `A^T M A` for a square `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrized(a.transpose() * &self.0 * a)
    }
}

/// Uniform sampling of `[t0, t1]` with `samples` points including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
}

impl TimeWindow {
    pub fn new(t0: f64, t1: f64, samples: usize) -> Result<Self> {
        let w = TimeWindow { t0, t1, samples };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return Err(Error::invalid("window", "t0 and t1 must be finite"));
        }
        if !(self.t0 < self.t1) {
            return Err(Error::invalid("window", format!("t0 = {} must be below t1 = {}", self.t0, self.t1)));
        }
        if self.samples < 2 {
            return Err(Error::invalid("window", "at least two samples are required"));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.samples - 1;
        let span = self.t1 - self.t0;
        (0..=n)
            .map(|i| if i == n { self.t1 } else { self.t0 + span * (i as f64) / (n as f64) })
            .collect()
    }
}

/// Eigen-decomposition of a symmetric matrix, ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }
}

/// Cyclic Jacobi eigen-solver for small symmetric matrices.
///
/// Eigenvalues come back ascending. Each eigenvector is normalized so that its first
/// component with magnitude above `1e-12` is positive.
pub fn sym_eigen(a: &SymMatrix) -> Spectrum {
    let n = a.dim();
    let mut m = a.matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        if let Some(first) = col.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                col = -col;
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    Spectrum { eigenvalues, eigenvectors }
}

fn eval_checked<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context: "finite-difference stencil", point: x.to_vec() })
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("step", format!("h = {h} must be positive")))
    }
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = eval_checked(&f, &probe)?;
        probe[i] = x[i] - h;
        let fm = eval_checked(&f, &probe)?;
        probe[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Central second-difference Hessian, symmetrized.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Result<SymMatrix> {
    check_step(h)?;
    let n = x.len();
    let f0 = eval_checked(&f, x)?;
    let mut probe = x.to_vec();
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + h;
        let fp = eval_checked(&f, &probe)?;
        probe[i] = x[i] - h;
        let fm = eval_checked(&f, &probe)?;
        probe[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h;
                probe[j] = x[j] + sj * h;
                let v = eval_checked(&f, &probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let d = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }
    Ok(SymMatrix::symmetrized(hess))
}

/// Points of a `grid`-per-axis lattice over `[-radius, radius]^dim` that lie in the closed ball.
///
/// `grid == 1` yields only the center.
pub fn ball_grid(center: &[f64], radius: f64, grid: usize) -> Vec<Vec<f64>> {
    let dim = center.len();
    if grid <= 1 || radius == 0.0 {
        return vec![center.to_vec()];
    }
    let ticks: Vec<f64> =
        (0..grid).map(|k| -radius + 2.0 * radius * (k as f64) / ((grid - 1) as f64)).collect();
    let total = grid.pow(dim as u32);
    let mut points = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut offset = Vec::with_capacity(dim);
        for _ in 0..dim {
            offset.push(ticks[rem % grid]);
            rem /= grid;
        }
        let r2: f64 = offset.iter().map(|o| o * o).sum();
        if r2 <= radius * radius * (1.0 + 1e-12) {
            points.push(center.iter().zip(&offset).map(|(c, o)| c + o).collect());
        }
    }
    points
}

/// Sampled bound `(1/3!) max |D^α f|` over all third-order multi-indices and all
/// points of [`ball_grid`].
///
/// Mixed partials come from the composed central difference
/// `Σ s_i s_j s_k f(x + h(s_i e_i + s_j e_j + s_k e_k)) / (8h³)`; the result is inflated by
/// a relative `1e-6` so that rounding cannot push it below the exact value.
pub fn third_derivative_bound<F: Fn(&[f64]) -> f64>(
    f: F,
    center: &[f64],
    radius: f64,
    grid: usize,
    h: f64,
) -> Result<f64> {
    check_step(h)?;
    let n = center.len();
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                triples.push([i, j, k]);
            }
        }
    }
    let signs = [-1.0, 1.0];
    let mut worst = 0.0f64;
    for point in ball_grid(center, radius, grid) {
        let mut probe = point.clone();
        for &[i, j, k] in &triples {
            let mut acc = 0.0;
            for &si in &signs {
                for &sj in &signs {
                    for &sk in &signs {
                        probe.copy_from_slice(&point);
                        probe[i] += si * h;
                        probe[j] += sj * h;
                        probe[k] += sk * h;
                        acc += si * sj * sk * eval_checked(&f, &probe)?;
                    }
                }
            }
            worst = worst.max((acc / (8.0 * h * h * h)).abs());
        }
    }
    Ok(worst / 6.0 * (1.0 + 1e-6))
}

/// One classical Runge–Kutta step, also returning the four stage points.
pub fn rk4_step_with_stages<const N: usize, F>(
    mut field: F,
    t: f64,
    x: &SVector<f64, N>,
    dt: f64,
) -> Result<(SVector<f64, N>, [SVector<f64, N>; 4])>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("{dt} must be positive")));
    }
    let mut eval = |s: f64, y: &SVector<f64, N>| -> Result<SVector<f64, N>> {
        let v = field(s, y)?;
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFinite { context: "vector field", point: y.iter().copied().collect() })
        }
    };
    let half = 0.5 * dt;
    let x1 = *x;
    let k1 = eval(t, &x1)?;
    let x2 = x + k1 * half;
    let k2 = eval(t + half, &x2)?;
    let x3 = x + k2 * half;
    let k3 = eval(t + half, &x3)?;
    let x4 = x + k3 * dt;
    let k4 = eval(t + dt, &x4)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Ok((next, [x1, x2, x3, x4]))
}

/// One classical Runge–Kutta step for `x' = field(t, x)`.
pub fn rk4_step<const N: usize, F>(field: F, t: f64, x: &SVector<f64, N>, dt: f64) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    rk4_step_with_stages(field, t, x, dt).map(|(next, _)| next)
}

/// Inverse right-trivialized differential of exp, truncated after the second bracket.
fn dexpinv_right(u: &Vec3, v: &Vec3) -> Vec3 {
    let c1 = u.cross(v);
    v + c1 * 0.5 + u.cross(&c1) / 12.0
}

/// Munthe-Kaas RK4 step for `Λ' = Λ hat(Ω)` given Ω at the four classical stages
/// (`t`, `t + dt/2`, `t + dt/2`, `t + dt`).
///
/// Stages may carry different Ω at the same time when Ω depends on a co-evolving state.
pub fn rkmk4_attitude_step_staged(omegas: &[Vec3; 4], attitude: &Rotation, dt: f64) -> Result<Rotation> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("{dt} must be positive")));
    }
    if !omegas.iter().all(|w| w.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite {
            context: "angular velocity",
            point: omegas.iter().flat_map(|w| w.iter().copied()).collect(),
        });
    }
    let half = 0.5 * dt;
    let k1 = omegas[0];
    let k2 = dexpinv_right(&(k1 * half), &omegas[1]);
    let k3 = dexpinv_right(&(k2 * half), &omegas[2]);
    let k4 = dexpinv_right(&(k3 * dt), &omegas[3]);
    let increment = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Ok(Rotation::from_matrix_unchecked(attitude.matrix() * exp_so3(&increment).matrix()))
}

/// Munthe-Kaas RK4 step for `Λ' = Λ hat(Ω(t))`.
pub fn rkmk4_attitude_step<F: Fn(f64) -> Vec3>(omega: F, t: f64, attitude: &Rotation, dt: f64) -> Result<Rotation> {
    let mid = omega(t + 0.5 * dt);
    rkmk4_attitude_step_staged(&[omega(t), mid, mid, omega(t + dt)], attitude, dt)
}

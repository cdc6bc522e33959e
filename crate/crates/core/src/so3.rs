//! The rotation group SO(3) and its Lie algebra so(3).
//!
//! Vectors in R^3 stand in for so(3) through the hat map, and for so(3)* through the
//! trace pairing `½ tr(â^T b̂) = a·b`. Under that identification the coadjoint action
//! of a rotation is plain matrix-vector multiplication.

use std::ops::Mul;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Absolute tolerance on `A + A^T` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-14;
/// Tolerance on `R^T R - I` and `det R - 1` accepted by [`Rotation::from_matrix`].
pub const ROTATION_TOL: f64 = 1e-12;

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
const SMALL_ANGLE: f64 = 1e-6;

/// A 3×3 skew-symmetric matrix, the matrix form of an element of so(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMat3(Mat3);

impl SkewMat3 {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Inverse of [`hat`]; infallible because the matrix is skew by construction.
    pub fn vee(&self) -> Vec3 {
        Vec3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }
}

/// A proper orthogonal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthogonality and orientation to [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NotRotation { orthogonality: f64::NAN, det: f64::NAN });
        }
        let orthogonality = orthogonality_defect(&m);
        let det = m.determinant();
        if orthogonality > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotRotation { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    pub fn from_unit_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(q.to_rotation_matrix().into_inner()).orthonormalized()
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Max-entry norm of `R^T R - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }

    /// Modified Gram–Schmidt on the columns; removes accumulated rounding drift.
    pub fn orthonormalized(&self) -> Self {
        let mut q = self.0;
        for j in 0..3 {
            let mut col = q.column(j).into_owned();
            for i in 0..j {
                let prev = q.column(i).into_owned();
                col -= prev * prev.dot(&col);
            }
            q.set_column(j, &col.normalize());
        }
        Rotation(q)
    }
}

impl TryFrom<Mat3> for Rotation {
    type Error = Error;

    fn try_from(m: Mat3) -> Result<Self> {
        Rotation::from_matrix(m)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::from_matrix(mat3_from_rows(&rows))
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        mat3_to_rows(&r.0)
    }
}

impl From<Rotation> for Mat3 {
    fn from(r: Rotation) -> Mat3 {
        r.0
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Row-major array form used for serialization.
pub fn mat3_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

pub fn mat3_from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn orthogonality_defect(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).amax()
}

/// The hat isomorphism R^3 → so(3): `hat(v) w = v × w`.
pub fn hat(v: &Vec3) -> SkewMat3 {
    SkewMat3(hat_matrix(v))
}

pub(crate) fn hat_matrix(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose skew defect exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).amax();
    if !(asymmetry <= SKEW_TOL) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Rodrigues coefficients `(sin θ / θ, (1 - cos θ) / θ²)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        (theta.sin() / theta, 0.5 * s * s)
    }
}

/// Exponential map so(3) → SO(3): rotation by `|v|` radians about `v / |v|`.
pub fn exp_so3(v: &Vec3) -> Rotation {
    Rotation(Mat3::identity() + exp_minus_identity(v))
}

/// `exp(hat(v)) - I`, accurate to relative rounding even for tiny `v`.
pub fn exp_minus_identity(v: &Vec3) -> Mat3 {
    let k = hat_matrix(v);
    let (a, b) = rodrigues_coefficients(v.norm());
    k * a + (k * k) * b
}

/// `(exp(hat(v)) - I) w` via cross products; exactly zero when `w` is a multiple of `v`.
pub fn exp_minus_identity_apply(v: &Vec3, w: &Vec3) -> Vec3 {
    let (a, b) = rodrigues_coefficients(v.norm());
    let vw = v.cross(w);
    vw * a + v.cross(&vw) * b
}

/// Trace pairing `½ tr(hat(a)^T hat(b))` identifying so(3)* with so(3).
pub fn pairing(a: &Vec3, b: &Vec3) -> f64 {
    0.5 * (hat_matrix(a).transpose() * hat_matrix(b)).trace()
}

/// `Ad_R v`, i.e. `vee(R hat(v) R^T)`.
pub fn adjoint(r: &Rotation, v: &Vec3) -> Vec3 {
    r.0 * v
}

/// Coadjoint action on so(3)* under the trace pairing: `π ↦ R π`.
pub fn coadjoint(r: &Rotation, pi: &Vec3) -> Vec3 {
    r.0 * pi
}

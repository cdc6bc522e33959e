//! Time-dependent energy-momentum analysis of almost-rigid bodies on T*SO(3).

// `!(x <= tol)` is used deliberately so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod numerics;
pub mod so3;
pub mod stability;

pub use dynamics::{BodyState, InertiaSchedule, SphereChart, Trajectory};
pub use equilibria::RelativeEquilibrium;
pub use error::{Error, Result};
pub use numerics::{Spectrum, SymMatrix, TimeWindow};
pub use so3::{Mat3, Rotation, SkewMat3, Vec3};
pub use stability::{CertificateReport, Margins, ProbeReport, ProbeSettings, ProbeVerdict, Verdict};

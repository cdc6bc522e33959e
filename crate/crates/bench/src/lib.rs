//! Shared fixtures for the benchmarks.

use tdem_core::equilibria::make_equilibrium;
use tdem_core::{InertiaSchedule, Mat3, RelativeEquilibrium, Rotation, TimeWindow, Vec3};

pub fn diag(a: f64, b: f64, c: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(a, b, c))
}

/// `J_∞ = diag(3, 2, 1)` relaxing from `J_∞ + 0.5 I` at unit rate.
pub fn exp_decay() -> InertiaSchedule {
    InertiaSchedule::exp_decay(diag(3.0, 2.0, 1.0), Mat3::identity() * 0.5, 1.0).expect("valid schedule")
}

pub fn window(samples: usize) -> TimeWindow {
    TimeWindow::new(0.0, 10.0, samples).expect("valid window")
}

/// Spin about the major axis with `p = 1`.
pub fn major_axis(schedule: &InertiaSchedule, window: &TimeWindow) -> RelativeEquilibrium {
    make_equilibrium(schedule, Vec3::x(), 1.0, Rotation::identity(), window).expect("principal axis")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        let s = exp_decay();
        let re = major_axis(&s, &window(11));
        assert_eq!(re.body_momentum(), Vec3::x());
    }
}

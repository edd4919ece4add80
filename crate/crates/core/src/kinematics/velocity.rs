use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::Vec3;
use super::landmark::LandmarkName;

pub const DEFAULT_EMA_ALPHA: f64 = 0.5;
pub const DEFAULT_WINDOW_MS: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub joint: LandmarkName,
    /// Signed angular velocity, degrees per second.
    pub omega_deg_s: f64,
    /// Landmark speed in body lengths per second.
    pub v_norm: f64,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VelocityError {
    #[error("need at least two samples inside the window, have {0}")]
    InsufficientHistory(usize),
    #[error("timestamps must strictly increase")]
    NonMonotonic,
}

/// Rate of change per second of the most recent samples within `window_ms`.
///
/// The windowed series is smoothed by an exponential moving average with
/// weight `alpha` on the newest value (`alpha = 1` disables smoothing), then
/// differentiated with a backward difference over the last two points.
pub fn smoothed_rate<T>(samples: &[(u64, T)], window_ms: u64, alpha: f64) -> Result<T, VelocityError>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(VelocityError::NonMonotonic);
    }
    let Some(&(t_last, _)) = samples.last() else {
        return Err(VelocityError::InsufficientHistory(0));
    };
    let start = samples.partition_point(|&(t, _)| t.saturating_add(window_ms) < t_last);
    let window = &samples[start..];
    if window.len() < 2 {
        return Err(VelocityError::InsufficientHistory(window.len()));
    }
    let alpha = alpha.clamp(f64::MIN_POSITIVE, 1.0);
    let mut smoothed = window[0].1;
    let mut previous = smoothed;
    for &(_, value) in &window[1..] {
        previous = smoothed;
        smoothed = value * alpha + smoothed * (1.0 - alpha);
    }
    let dt_s = (window[window.len() - 1].0 - window[window.len() - 2].0) as f64 / 1000.0;
    Ok((smoothed - previous) * (1.0 / dt_s))
}

/// Angular velocity in degrees per second over `(t_ms, theta_deg)` samples.
pub fn angular_velocity(
    history: &[(u64, f64)],
    window_ms: u64,
    alpha: f64,
) -> Result<f64, VelocityError> {
    smoothed_rate(history, window_ms, alpha)
}

/// Landmark speed in coordinate units per second over `(t_ms, position)` samples.
pub fn landmark_speed(
    history: &[(u64, Vec3)],
    window_ms: u64,
    alpha: f64,
) -> Result<f64, VelocityError> {
    smoothed_rate(history, window_ms, alpha).map(Vec3::norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_difference_quotient() {
        let omega = angular_velocity(&[(0, 0.0), (500, 30.0)], 1000, 1.0).unwrap();
        assert!((omega - 60.0).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_has_zero_rate() {
        let history: alloc::vec::Vec<_> = (0..20).map(|i| (i * 33, 45.0)).collect();
        assert_eq!(angular_velocity(&history, 300, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn insufficient_history() {
        assert_eq!(
            angular_velocity(&[(0, 1.0)], 300, 0.5),
            Err(VelocityError::InsufficientHistory(1))
        );
        // the first sample falls outside the window
        assert_eq!(
            angular_velocity(&[(0, 1.0), (1000, 2.0)], 300, 0.5),
            Err(VelocityError::InsufficientHistory(1))
        );
        assert_eq!(
            angular_velocity(&[(10, 1.0), (10, 2.0)], 300, 0.5),
            Err(VelocityError::NonMonotonic)
        );
    }

    #[test]
    fn raised_cosine_peak_velocity() {
        // theta(t) = 90 (1 - cos(2 pi t / 4000)) / 2; d theta/dt at t=1000 ms
        let theta = |t: f64| 45.0 * (1.0 - libm::cos(2.0 * core::f64::consts::PI * t / 4000.0));
        let analytic = 45.0 * (2.0 * core::f64::consts::PI / 4000.0) * 1000.0;
        assert!((analytic - 70.686).abs() < 1e-3);
        let history: alloc::vec::Vec<(u64, f64)> = (0..=30)
            .map(|i| {
                let t = libm::round(i as f64 * 1000.0 / 30.0) as u64;
                (t, theta(t as f64))
            })
            .collect();
        assert_eq!(history.last().unwrap().0, 1000);
        let omega = angular_velocity(&history, DEFAULT_WINDOW_MS, DEFAULT_EMA_ALPHA).unwrap();
        assert!(
            (omega - analytic).abs() <= 0.05 * analytic,
            "omega {omega} vs {analytic}"
        );
    }

    #[test]
    fn landmark_speed_of_straight_line() {
        let history: alloc::vec::Vec<_> = (0..5)
            .map(|i| (i * 100, Vec3::new(0.1 * i as f64, 0.0, 0.0)))
            .collect();
        let v = landmark_speed(&history, 1000, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn linear_series_recovers_slope(
            slope in -200.0..200.0f64,
            offset in -90.0..90.0f64,
            steps in proptest::collection::vec(1u64..80, 2..30),
        ) {
            let mut t = 0;
            let mut history = alloc::vec::Vec::new();
            for dt in steps {
                t += dt;
                history.push((t, offset + slope * t as f64 / 1000.0));
            }
            let omega = angular_velocity(&history, u64::MAX / 2, 1.0).unwrap();
            prop_assert!((omega - slope).abs() < 1e-6 * (1.0 + slope.abs()));
        }
    }
}

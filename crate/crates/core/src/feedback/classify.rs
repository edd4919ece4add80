use thiserror::Error;

use super::{FeedbackConfig, KinematicState};
use crate::constraints::Constraint;
use crate::kinematics::VelocitySample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("constraint has no angle limit")]
pub struct MissingLimit;

/// Places `theta` in the decision-matrix bands of `constraint`.
///
/// With `max_angle` present the bands are, from the top: critical above
/// `max + delta`, optimal down to `max - optimal_band`, approaching down to
/// `max - under_band`, under-extension below that. A `min_angle` turns any
/// non-critical reading below it into under-extension; on its own it yields
/// optimal at or above the minimum.
pub fn classify_angle(
    theta: f64,
    constraint: &Constraint,
    cfg: &FeedbackConfig,
) -> Result<KinematicState, MissingLimit> {
    let band = match constraint.max_angle {
        Some(max) => Some(if theta > max + cfg.delta_deg {
            KinematicState::CriticalViolation
        } else if theta >= max - cfg.optimal_band_deg {
            KinematicState::Optimal
        } else if theta >= max - cfg.under_band_deg {
            KinematicState::Approaching
        } else {
            KinematicState::UnderExtension
        }),
        None => None,
    };
    match (band, constraint.min_angle) {
        (Some(KinematicState::CriticalViolation), _) => Ok(KinematicState::CriticalViolation),
        (_, Some(min)) if theta < min => Ok(KinematicState::UnderExtension),
        (Some(state), _) => Ok(state),
        (None, Some(_)) => Ok(KinematicState::Optimal),
        (None, None) => Err(MissingLimit),
    }
}

/// `HighVelocity` when the relevant speed strictly exceeds `max_velocity`.
///
/// Constraints with an `axis` limit angular speed in deg/s; others limit
/// landmark speed in body lengths per second.
pub fn classify_velocity(v: &VelocitySample, constraint: &Constraint) -> Option<KinematicState> {
    let limit = constraint.max_velocity?;
    let magnitude = if constraint.axis.is_some() {
        v.omega_deg_s.abs()
    } else {
        v.v_norm.abs()
    };
    (magnitude > limit).then_some(KinematicState::HighVelocity)
}

/// Highest-priority state present; `NoData` for an empty input.
pub fn resolve<I: IntoIterator<Item = KinematicState>>(states: I) -> KinematicState {
    states
        .into_iter()
        .max_by_key(|s| s.priority())
        .unwrap_or(KinematicState::NoData)
}

//! Classification of kinematic samples, priority resolution, debouncing and
//! message rendering.
//!
//! Classification is pure. The only state is the per-session [`Debouncer`].

mod classify;
mod debounce;
mod messages;

pub use classify::{classify_angle, classify_velocity, resolve, MissingLimit};
pub use debounce::Debouncer;
pub use messages::{MessageTable, MessageTableError, BUNDLED_MESSAGES};

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    /// Margin above `max_angle` before a violation is critical.
    pub delta_deg: f64,
    pub optimal_band_deg: f64,
    pub under_band_deg: f64,
    pub stability_frames: u32,
    pub min_message_interval_ms: u64,
    pub critical_bypasses_debounce: bool,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            delta_deg: 5.0,
            optimal_band_deg: 10.0,
            under_band_deg: 15.0,
            stability_frames: 3,
            min_message_interval_ms: 1000,
            critical_bypasses_debounce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid feedback config: {0}")]
pub struct ConfigError(pub String);

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta_deg > 0.0 && self.delta_deg.is_finite()) {
            return Err(ConfigError("delta_deg must be positive".into()));
        }
        if !(self.optimal_band_deg > 0.0 && self.optimal_band_deg <= self.under_band_deg) {
            return Err(ConfigError(
                "need 0 < optimal_band_deg <= under_band_deg".into(),
            ));
        }
        if !self.under_band_deg.is_finite() {
            return Err(ConfigError("under_band_deg must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KinematicState {
    CriticalViolation,
    Optimal,
    Approaching,
    UnderExtension,
    HighVelocity,
    SpatialViolation,
    NoData,
}

impl KinematicState {
    pub const ALL: [KinematicState; 7] = [
        KinematicState::CriticalViolation,
        KinematicState::Optimal,
        KinematicState::Approaching,
        KinematicState::UnderExtension,
        KinematicState::HighVelocity,
        KinematicState::SpatialViolation,
        KinematicState::NoData,
    ];

    /// Higher wins in [`resolve`].
    pub fn priority(self) -> u8 {
        match self {
            KinematicState::CriticalViolation => 6,
            KinematicState::SpatialViolation => 5,
            KinematicState::HighVelocity => 4,
            KinematicState::UnderExtension => 3,
            KinematicState::Optimal => 2,
            KinematicState::Approaching => 1,
            KinematicState::NoData => 0,
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            KinematicState::CriticalViolation | KinematicState::SpatialViolation => Severity::Stop,
            KinematicState::HighVelocity => Severity::Pace,
            KinematicState::UnderExtension => Severity::Encourage,
            KinematicState::Optimal => Severity::Praise,
            KinematicState::Approaching | KinematicState::NoData => Severity::Silent,
        }
    }

    pub fn is_silent(self) -> bool {
        self.severity() == Severity::Silent
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KinematicState::CriticalViolation => "CriticalViolation",
            KinematicState::Optimal => "Optimal",
            KinematicState::Approaching => "Approaching",
            KinematicState::UnderExtension => "UnderExtension",
            KinematicState::HighVelocity => "HighVelocity",
            KinematicState::SpatialViolation => "SpatialViolation",
            KinematicState::NoData => "NoData",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for KinematicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Stop,
    Pace,
    Encourage,
    Praise,
    Silent,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Stop => "stop",
            Severity::Pace => "pace",
            Severity::Encourage => "encourage",
            Severity::Praise => "praise",
            Severity::Silent => "silent",
        }
    }
}

/// A corrective message together with the constraint that justifies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub frame_id: u64,
    pub t_ms: u64,
    pub state: KinematicState,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_constraint_id: Option<String>,
    pub severity: Severity,
}

//! Geometry over landmark frames: joint angles, velocities and spatial relations.
//!
//! Everything here is a pure function of its inputs. Degenerate geometry is
//! reported as a typed error rather than a NaN.

mod geometry;
mod joint;
mod landmark;
mod spatial;
mod velocity;

pub use geometry::{angle_between, DegenerateVector, Plane, Vec3, EPSILON};
pub use joint::{
    measure_joint, resolve_joint, AngleConvention, JointAngleSample, JointDef, MeasurementError,
    DEFAULT_VISIBILITY_FLOOR,
};
pub use landmark::{BodyPart, FrameError, Landmark, LandmarkName, PoseFrame, Side, UnknownLandmark};
pub use spatial::{body_length, eval_spatial_relation, SpatialError, SpatialEval, SpatialRelation};
pub use velocity::{
    angular_velocity, landmark_speed, smoothed_rate, VelocityError, VelocitySample,
    DEFAULT_EMA_ALPHA, DEFAULT_WINDOW_MS,
};

use serde::{Deserialize, Serialize};

/// Tunables for measurement and velocity estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsConfig {
    pub visibility_floor: f64,
    pub ema_alpha: f64,
    pub velocity_window_ms: u64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            visibility_floor: DEFAULT_VISIBILITY_FLOOR,
            ema_alpha: DEFAULT_EMA_ALPHA,
            velocity_window_ms: DEFAULT_WINDOW_MS,
        }
    }
}

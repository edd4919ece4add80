use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{Vec3, EPSILON};
use super::joint::{landmark_checked, MeasurementError};
use super::landmark::{BodyPart, LandmarkName, PoseFrame, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRelation {
    /// The knee stays behind the toes along the facing direction.
    BehindToe,
}

impl SpatialRelation {
    pub fn parse(name: &str) -> Result<Self, SpatialError> {
        match name.trim() {
            "behind_toe" => Ok(SpatialRelation::BehindToe),
            other => Err(SpatialError::UnknownRelation(other.into())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialRelation::BehindToe => "behind_toe",
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("unknown spatial relation {0:?}")]
    UnknownRelation(alloc::string::String),
    #[error("foot direction is degenerate")]
    DegenerateFoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialEval {
    pub satisfied: bool,
    /// Signed displacement in body lengths; positive means past the limit.
    pub margin_norm: f64,
}

/// Mean hip-to-ankle distance over the sides where both landmarks are usable.
pub fn body_length(frame: &PoseFrame, visibility_floor: f64) -> Result<f64, MeasurementError> {
    let mut total = 0.0;
    let mut count = 0;
    let mut first_err = None;
    for side in Side::BOTH {
        let hip = landmark_checked(frame, LandmarkName::of(side, BodyPart::Hip), visibility_floor);
        let ankle = landmark_checked(
            frame,
            LandmarkName::of(side, BodyPart::Ankle),
            visibility_floor,
        );
        match (hip, ankle) {
            (Ok(h), Ok(a)) => {
                total += (h.position() - a.position()).norm();
                count += 1;
            }
            (Err(e), _) | (_, Err(e)) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if count == 0 {
        return Err(first_err.unwrap_or(MeasurementError::MissingLandmark(LandmarkName::LeftHip)));
    }
    let length = total / count as f64;
    if !(length > EPSILON) {
        return Err(MeasurementError::Degenerate(super::geometry::DegenerateVector {
            norm: length,
        }));
    }
    Ok(length)
}

/// Evaluates `relation` for one side of the body.
pub fn eval_spatial_relation(
    frame: &PoseFrame,
    relation: SpatialRelation,
    side: Side,
    visibility_floor: f64,
) -> Result<SpatialEval, SpatialError> {
    match relation {
        SpatialRelation::BehindToe => {
            let knee = landmark_checked(frame, LandmarkName::of(side, BodyPart::Knee), visibility_floor)?;
            let toe = landmark_checked(
                frame,
                LandmarkName::of(side, BodyPart::FootIndex),
                visibility_floor,
            )?;
            let ankle = landmark_checked(
                frame,
                LandmarkName::of(side, BodyPart::Ankle),
                visibility_floor,
            )?;
            let length = body_length(frame, visibility_floor)?;
            // forward is the horizontal (x/z) ankle -> toe direction
            let foot = toe.position() - ankle.position();
            let forward = Vec3::new(foot.x, 0.0, foot.z);
            let n = forward.norm();
            if !(n > EPSILON) {
                return Err(SpatialError::DegenerateFoot);
            }
            let forward = forward * (1.0 / n);
            let displacement = (knee.position() - toe.position()).dot(forward);
            Ok(SpatialEval {
                satisfied: displacement <= 0.0,
                margin_norm: displacement / length,
            })
        }
    }
}

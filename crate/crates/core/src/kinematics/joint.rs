use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{angle_between, DegenerateVector, Plane};
use super::landmark::{BodyPart, LandmarkName, PoseFrame, Side};

/// Default minimum landmark visibility for a measurement to be trusted.
pub const DEFAULT_VISIBILITY_FLOOR: f64 = 0.5;

/// How the angle at the vertex maps to the clinical angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// The angle between the two rays.
    #[default]
    Interior,
    /// `180 - interior`: zero when the segments are in line (knee, elbow flexion).
    Supplement,
}

impl AngleConvention {
    pub fn apply(self, interior_deg: f64) -> f64 {
        match self {
            AngleConvention::Interior => interior_deg,
            AngleConvention::Supplement => 180.0 - interior_deg,
        }
    }

    /// Interior angle that yields `clinical_deg` under this convention.
    pub fn invert(self, clinical_deg: f64) -> f64 {
        self.apply(clinical_deg)
    }
}

/// A measurable joint angle: the angle at `vertex` between `vertex -> ray_a`
/// and `vertex -> ray_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDef {
    pub vertex: LandmarkName,
    pub ray_a: LandmarkName,
    pub ray_b: LandmarkName,
    #[serde(default)]
    pub projection_plane: Plane,
    #[serde(default)]
    pub convention: AngleConvention,
}

impl JointDef {
    pub fn new(vertex: LandmarkName, ray_a: LandmarkName, ray_b: LandmarkName) -> Option<Self> {
        if vertex == ray_a || vertex == ray_b || ray_a == ray_b {
            return None;
        }
        Some(JointDef {
            vertex,
            ray_a,
            ray_b,
            projection_plane: Plane::None,
            convention: AngleConvention::Interior,
        })
    }

    pub fn with_plane(mut self, plane: Plane) -> Self {
        self.projection_plane = plane;
        self
    }

    pub fn with_convention(mut self, convention: AngleConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Shoulder abduction: arm against the ipsilateral trunk line, frontal plane.
    pub fn shoulder_abduction(side: Side) -> Self {
        JointDef::new(
            LandmarkName::of(side, BodyPart::Shoulder),
            LandmarkName::of(side, BodyPart::Elbow),
            LandmarkName::of(side, BodyPart::Hip),
        )
        .expect("distinct landmarks")
        .with_plane(Plane::Frontal)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasurementError {
    #[error("landmark {0} missing from frame")]
    MissingLandmark(LandmarkName),
    #[error("landmark {name} visibility {visibility} below floor")]
    LowConfidence { name: LandmarkName, visibility: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(#[from] DegenerateVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAngleSample {
    /// The vertex landmark, e.g. `left_shoulder`.
    pub joint: LandmarkName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<alloc::string::String>,
    pub theta_deg: f64,
    pub t_ms: u64,
    pub confidence: f64,
}

pub(crate) fn landmark_checked(
    frame: &PoseFrame,
    name: LandmarkName,
    floor: f64,
) -> Result<&super::landmark::Landmark, MeasurementError> {
    let lm = frame
        .get(name)
        .ok_or(MeasurementError::MissingLandmark(name))?;
    if lm.visibility < floor {
        return Err(MeasurementError::LowConfidence {
            name,
            visibility: lm.visibility,
        });
    }
    Ok(lm)
}

/// Measures `def` on `frame`, suppressing landmarks below `visibility_floor`.
pub fn measure_joint(
    frame: &PoseFrame,
    def: &JointDef,
    visibility_floor: f64,
) -> Result<JointAngleSample, MeasurementError> {
    let vertex = landmark_checked(frame, def.vertex, visibility_floor)?;
    let a = landmark_checked(frame, def.ray_a, visibility_floor)?;
    let b = landmark_checked(frame, def.ray_b, visibility_floor)?;
    let origin = vertex.position();
    let ray_a = def.projection_plane.project(a.position() - origin);
    let ray_b = def.projection_plane.project(b.position() - origin);
    let interior = angle_between(ray_a, ray_b)?;
    let theta_deg = def.convention.apply(interior).clamp(0.0, 180.0);
    Ok(JointAngleSample {
        joint: def.vertex,
        axis: None,
        theta_deg,
        t_ms: frame.t_ms,
        confidence: vertex.visibility.min(a.visibility).min(b.visibility),
    })
}

/// Maps a clinical joint/axis pair onto a measurable [`JointDef`].
pub fn resolve_joint(joint: &str, axis: Option<&str>, side: Side) -> Option<JointDef> {
    use AngleConvention::*;
    use BodyPart::*;
    let part = BodyPart::parse(joint)?;
    let lm = |p| LandmarkName::of(side, p);
    let def = |vertex, a, b, plane, conv| {
        JointDef::new(lm(vertex), lm(a), lm(b)).map(|d| d.with_plane(plane).with_convention(conv))
    };
    let axis = axis.map(str::trim);
    match (part, axis) {
        (Shoulder, Some("abduction") | Some("adduction")) => {
            def(Shoulder, Elbow, Hip, Plane::Frontal, Interior)
        }
        (Shoulder, Some("flexion") | Some("extension")) => {
            def(Shoulder, Elbow, Hip, Plane::Sagittal, Interior)
        }
        (Shoulder, None | Some("elevation")) => def(Shoulder, Elbow, Hip, Plane::None, Interior),
        (Elbow, None | Some("flexion") | Some("extension")) => {
            def(Elbow, Wrist, Shoulder, Plane::None, Supplement)
        }
        (Hip, Some("abduction") | Some("adduction")) => {
            def(Hip, Knee, Shoulder, Plane::Frontal, Supplement)
        }
        (Hip, None | Some("flexion") | Some("extension")) => {
            def(Hip, Knee, Shoulder, Plane::Sagittal, Supplement)
        }
        (Knee, None | Some("flexion") | Some("extension")) => {
            def(Knee, Ankle, Hip, Plane::None, Supplement)
        }
        _ => None,
    }
}

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::Vec3;

/// Body side, from the subject's point of view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" | "lt" => Some(Side::Left),
            "right" | "r" | "rt" => Some(Side::Right),
            _ => None,
        }
    }
}

/// Anatomical point without a side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BodyPart {
    Shoulder,
    Elbow,
    Wrist,
    Hip,
    Knee,
    Ankle,
    Heel,
    FootIndex,
}

impl BodyPart {
    pub fn parse(s: &str) -> Option<BodyPart> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "shoulder" | "acromion" => BodyPart::Shoulder,
            "elbow" | "lateral_epicondyle" => BodyPart::Elbow,
            "wrist" | "ulnar_styloid" => BodyPart::Wrist,
            "hip" => BodyPart::Hip,
            "knee" => BodyPart::Knee,
            "ankle" => BodyPart::Ankle,
            "heel" => BodyPart::Heel,
            "foot_index" | "toe" | "toes" => BodyPart::FootIndex,
            _ => return None,
        })
    }
}

macro_rules! landmarks {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The closed 17-point canonical landmark enumeration.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum LandmarkName {
            $($variant),+
        }

        impl LandmarkName {
            pub const ALL: [LandmarkName; 17] = [$(LandmarkName::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(LandmarkName::$variant => $name),+
                }
            }

            fn canonical(s: &str) -> Option<LandmarkName> {
                match s {
                    $($name => Some(LandmarkName::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

landmarks! {
    Nose => "nose",
    LeftShoulder => "left_shoulder",
    RightShoulder => "right_shoulder",
    LeftElbow => "left_elbow",
    RightElbow => "right_elbow",
    LeftWrist => "left_wrist",
    RightWrist => "right_wrist",
    LeftHip => "left_hip",
    RightHip => "right_hip",
    LeftKnee => "left_knee",
    RightKnee => "right_knee",
    LeftAnkle => "left_ankle",
    RightAnkle => "right_ankle",
    LeftHeel => "left_heel",
    RightHeel => "right_heel",
    LeftFootIndex => "left_foot_index",
    RightFootIndex => "right_foot_index",
}

impl LandmarkName {
    pub const COUNT: usize = 17;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of(side: Side, part: BodyPart) -> LandmarkName {
        use BodyPart::*;
        use LandmarkName as L;
        match (side, part) {
            (Side::Left, Shoulder) => L::LeftShoulder,
            (Side::Right, Shoulder) => L::RightShoulder,
            (Side::Left, Elbow) => L::LeftElbow,
            (Side::Right, Elbow) => L::RightElbow,
            (Side::Left, Wrist) => L::LeftWrist,
            (Side::Right, Wrist) => L::RightWrist,
            (Side::Left, Hip) => L::LeftHip,
            (Side::Right, Hip) => L::RightHip,
            (Side::Left, Knee) => L::LeftKnee,
            (Side::Right, Knee) => L::RightKnee,
            (Side::Left, Ankle) => L::LeftAnkle,
            (Side::Right, Ankle) => L::RightAnkle,
            (Side::Left, Heel) => L::LeftHeel,
            (Side::Right, Heel) => L::RightHeel,
            (Side::Left, FootIndex) => L::LeftFootIndex,
            (Side::Right, FootIndex) => L::RightFootIndex,
        }
    }

    pub fn side(self) -> Option<Side> {
        let s = self.as_str();
        if s.starts_with("left_") {
            Some(Side::Left)
        } else if s.starts_with("right_") {
            Some(Side::Right)
        } else {
            None
        }
    }

    /// Resolves a canonical name or a clinical alias such as `left_acromion`.
    pub fn parse(s: &str) -> Option<LandmarkName> {
        if let Some(name) = Self::canonical(s) {
            return Some(name);
        }
        let (side, rest) = s.split_once('_')?;
        let side = Side::parse(side)?;
        let part = BodyPart::parse(rest)?;
        Some(LandmarkName::of(side, part))
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown landmark name {0:?}")]
pub struct UnknownLandmark(pub alloc::string::String);

impl FromStr for LandmarkName {
    type Err = UnknownLandmark;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandmarkName::parse(s).ok_or_else(|| UnknownLandmark(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: LandmarkName,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub fn new(name: LandmarkName, x: f64, y: f64, z: f64, visibility: f64) -> Self {
        Landmark {
            name,
            x,
            y,
            z,
            visibility,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    fn check(&self) -> Result<(), FrameError> {
        let fields = [
            ("x", self.x),
            ("y", self.y),
            ("z", self.z),
            ("visibility", self.visibility),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return Err(FrameError::NonFinite {
                    name: self.name,
                    field,
                });
            }
            if field != "z" && !(0.0..=1.0).contains(&value) {
                return Err(FrameError::OutOfRange {
                    name: self.name,
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("landmark {0} appears more than once")]
    DuplicateLandmark(LandmarkName),
    #[error("landmark {name}: {field} = {value} outside [0, 1]")]
    OutOfRange {
        name: LandmarkName,
        field: &'static str,
        value: f64,
    },
    #[error("landmark {name}: {field} is not finite")]
    NonFinite {
        name: LandmarkName,
        field: &'static str,
    },
}

/// One time-stamped set of landmarks, at most one per canonical name.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_id: u64,
    pub t_ms: u64,
    slots: [Option<Landmark>; LandmarkName::COUNT],
}

impl PoseFrame {
    pub fn new(
        frame_id: u64,
        t_ms: u64,
        landmarks: impl IntoIterator<Item = Landmark>,
    ) -> Result<Self, FrameError> {
        let mut slots = [None; LandmarkName::COUNT];
        for lm in landmarks {
            lm.check()?;
            let slot = &mut slots[lm.name.index()];
            if slot.is_some() {
                return Err(FrameError::DuplicateLandmark(lm.name));
            }
            *slot = Some(lm);
        }
        Ok(PoseFrame {
            frame_id,
            t_ms,
            slots,
        })
    }

    pub fn get(&self, name: LandmarkName) -> Option<&Landmark> {
        self.slots[name.index()].as_ref()
    }

    /// Present landmarks in canonical order.
    pub fn landmarks(&self) -> impl Iterator<Item = &Landmark> + '_ {
        self.slots.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.landmarks().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

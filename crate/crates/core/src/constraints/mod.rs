//! Clinical extraction: prescription text to kinematic constraints.
//!
//! [`NoteParser`] is the deterministic extractor, driven by a versioned
//! pattern table. Any [`ExtractionProvider`] output is expected to pass
//! through [`validate`] before a session uses it.

mod grammar;
mod merge;
mod validate;

pub use grammar::{
    parse_note, GrammarError, NoteParser, ParseError, PatternTable, SentenceUse,
    BUNDLED_PATTERNS,
};
pub use merge::merge;
pub use validate::{validate, Finding, FindingKind, ValidationReport};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Side;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_id: String,
    pub text: String,
}

impl ClinicalNote {
    pub fn new(note_id: impl Into<String>, text: impl Into<String>) -> Self {
        ClinicalNote {
            note_id: note_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Urgency {
    #[default]
    Normal,
    High,
}

impl fmt::Display for Urgency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Urgency::Normal => "normal",
            Urgency::High => "high",
        })
    }
}

/// One structured kinematic limit.
///
/// Field names follow the extraction schema (`joint`, `axis`, `max_angle`,
/// `urgency`, `spatial_rel`, `max_velocity`); `constraint_id`, `side` and
/// `min_angle` are extensions. Unknown fields survive in `extensions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    /// Empty when absent on input; see [`Constraint::derive_id`].
    #[serde(default)]
    pub constraint_id: String,
    pub joint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "crate::fmt_num::serialize_opt"
    )]
    pub max_angle: Option<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "crate::fmt_num::serialize_opt"
    )]
    pub min_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_rel: Option<String>,
    /// Degrees per second when `axis` is set, body lengths per second otherwise.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "crate::fmt_num::serialize_opt"
    )]
    pub max_velocity: Option<f64>,
    #[serde(default)]
    pub urgency: Urgency,
    #[serde(flatten)]
    pub extensions: BTreeMap<String, serde_json::Value>,
}

/// Identity of a constraint for conflict detection and merging.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConstraintKey {
    pub joint: String,
    pub side: Option<Side>,
    pub axis: Option<String>,
    pub spatial_rel: Option<String>,
}

impl Constraint {
    pub fn new(joint: impl Into<String>) -> Self {
        let joint = joint.into();
        Constraint {
            constraint_id: joint.clone(),
            joint,
            side: None,
            axis: None,
            max_angle: None,
            min_angle: None,
            spatial_rel: None,
            max_velocity: None,
            urgency: Urgency::Normal,
            extensions: BTreeMap::new(),
        }
    }

    pub fn key(&self) -> ConstraintKey {
        ConstraintKey {
            joint: self.joint.clone(),
            side: self.side,
            axis: self.axis.clone(),
            spatial_rel: self.spatial_rel.clone(),
        }
    }

    pub fn has_limit(&self) -> bool {
        self.max_angle.is_some()
            || self.min_angle.is_some()
            || self.spatial_rel.is_some()
            || self.max_velocity.is_some()
    }

    pub fn has_angle_limit(&self) -> bool {
        self.max_angle.is_some() || self.min_angle.is_some()
    }

    /// Joint label for messages, e.g. `left shoulder`.
    pub fn joint_label(&self) -> String {
        match self.side {
            Some(side) => alloc::format!("{} {}", side.as_str(), self.joint),
            None => self.joint.clone(),
        }
    }

    /// Deterministic id from the constraint's identity: `left_knee.flexion`.
    pub fn derive_id(&self) -> String {
        let mut id = String::new();
        if let Some(side) = self.side {
            id.push_str(side.as_str());
            id.push('_');
        }
        id.push_str(&self.joint);
        for part in [&self.axis, &self.spatial_rel].into_iter().flatten() {
            id.push('.');
            id.push_str(part);
        }
        id
    }

    pub fn with_id(mut self) -> Self {
        self.constraint_id = self.derive_id();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub source_note_id: String,
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub residual_text: Vec<String>,
}

impl ConstraintSet {
    pub fn new(source_note_id: impl Into<String>) -> Self {
        ConstraintSet {
            source_note_id: source_note_id.into(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn get(&self, constraint_id: &str) -> Option<&Constraint> {
        self.constraints
            .iter()
            .find(|c| c.constraint_id == constraint_id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("extraction provider unavailable: {0}")]
    Unavailable(String),
}

/// Anything that can turn a clinical note into constraints: the bundled
/// grammar, a prebuilt set, or a generative model behind an adapter.
pub trait ExtractionProvider {
    fn extract(&self, note: &ClinicalNote) -> Result<ConstraintSet, ExtractionError>;
}

impl<P: ExtractionProvider + ?Sized> ExtractionProvider for &P {
    fn extract(&self, note: &ClinicalNote) -> Result<ConstraintSet, ExtractionError> {
        (**self).extract(note)
    }
}

/// Provider that ignores the note and hands back a fixed set.
#[derive(Debug, Clone)]
pub struct Prebuilt(pub ConstraintSet);

impl ExtractionProvider for Prebuilt {
    fn extract(&self, _note: &ClinicalNote) -> Result<ConstraintSet, ExtractionError> {
        Ok(self.0.clone())
    }
}

//! Canonical JSON form of a [`ConstraintSet`].
//!
//! ```json
//! {"version":1,"source_note_id":"n1","constraints":[{"constraint_id":"shoulder.abduction",
//!  "joint":"shoulder","axis":"abduction","max_angle":90,"urgency":"high"}],"residual_text":[]}
//! ```
//!
//! Whole-number limits serialize without a fractional part. Unknown
//! constraint fields are carried through unchanged.

use rehabloop_core::constraints::{Constraint, ConstraintSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema violation at {path}: {message}")]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl SchemaViolation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct Out<'a> {
    version: u32,
    source_note_id: &'a str,
    constraints: &'a [Constraint],
    residual_text: &'a [String],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct In {
    version: u32,
    #[serde(default)]
    source_note_id: String,
    constraints: Vec<Constraint>,
    #[serde(default)]
    residual_text: Vec<String>,
}

fn out(set: &ConstraintSet) -> Out<'_> {
    Out {
        version: SCHEMA_VERSION,
        source_note_id: &set.source_note_id,
        constraints: &set.constraints,
        residual_text: &set.residual_text,
    }
}

/// Compact single-line form.
pub fn to_schema(set: &ConstraintSet) -> String {
    serde_json::to_string(&out(set)).expect("constraint sets always serialize")
}

pub fn to_schema_pretty(set: &ConstraintSet) -> String {
    serde_json::to_string_pretty(&out(set)).expect("constraint sets always serialize")
}

pub fn to_schema_value(set: &ConstraintSet) -> serde_json::Value {
    serde_json::to_value(out(set)).expect("constraint sets always serialize")
}

pub fn from_schema(text: &str) -> Result<ConstraintSet, SchemaViolation> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: In = serde_path_to_error::deserialize(de)
        .map_err(|e| SchemaViolation::new(e.path().to_string(), e.inner().to_string()))?;
    finish(parsed)
}

pub fn from_schema_value(value: serde_json::Value) -> Result<ConstraintSet, SchemaViolation> {
    let parsed: In = serde_path_to_error::deserialize(value)
        .map_err(|e| SchemaViolation::new(e.path().to_string(), e.inner().to_string()))?;
    finish(parsed)
}

fn finish(parsed: In) -> Result<ConstraintSet, SchemaViolation> {
    if parsed.version != SCHEMA_VERSION {
        return Err(SchemaViolation::new(
            "version",
            format!("unsupported version {}", parsed.version),
        ));
    }
    let mut constraints = parsed.constraints;
    for (i, c) in constraints.iter_mut().enumerate() {
        if c.joint.trim().is_empty() {
            return Err(SchemaViolation::new(format!("constraints[{i}].joint"), "empty joint"));
        }
        if !c.has_limit() {
            return Err(SchemaViolation::new(
                format!("constraints[{i}]"),
                "constraint carries no limit",
            ));
        }
        if c.constraint_id.is_empty() {
            c.constraint_id = c.derive_id();
        }
    }
    Ok(ConstraintSet {
        source_note_id: parsed.source_note_id,
        constraints,
        residual_text: parsed.residual_text,
    })
}

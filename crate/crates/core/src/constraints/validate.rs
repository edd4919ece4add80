use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ConstraintKey, ConstraintSet};
use crate::kinematics::{resolve_joint, Side, SpatialRelation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    MissingLimit,
    AngleOutOfRange,
    InvertedRange,
    InvalidVelocity,
    DuplicateId,
    Conflict,
    UnknownRelation,
    Unmeasurable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub constraint_ids: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, kind: FindingKind, ids: Vec<String>, message: String) {
        self.findings.push(Finding {
            kind,
            constraint_ids: ids,
            message,
        });
    }
}

/// Checks invariants, physiologic plausibility and pairwise conflicts.
pub fn validate(set: &ConstraintSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_key: BTreeMap<ConstraintKey, Vec<usize>> = BTreeMap::new();

    for (i, c) in set.constraints.iter().enumerate() {
        let id = || vec![c.constraint_id.clone()];
        if let Some(first) = seen_ids.insert(&c.constraint_id, i) {
            report.push(
                FindingKind::DuplicateId,
                vec![c.constraint_id.clone()],
                format!("constraint id used at positions {first} and {i}"),
            );
        }
        by_key.entry(c.key()).or_default().push(i);

        if !c.has_limit() {
            report.push(
                FindingKind::MissingLimit,
                id(),
                "no max_angle, min_angle, spatial_rel or max_velocity".into(),
            );
        }
        if let Some(max) = c.max_angle {
            if !(max > 0.0 && max <= 180.0) {
                report.push(
                    FindingKind::AngleOutOfRange,
                    id(),
                    format!("angle out of physiologic range: max_angle {max}"),
                );
            }
        }
        if let Some(min) = c.min_angle {
            if !(0.0..180.0).contains(&min) {
                report.push(
                    FindingKind::AngleOutOfRange,
                    id(),
                    format!("angle out of physiologic range: min_angle {min}"),
                );
            }
        }
        if let (Some(min), Some(max)) = (c.min_angle, c.max_angle) {
            if min >= max {
                report.push(
                    FindingKind::InvertedRange,
                    id(),
                    format!("min_angle {min} is not below max_angle {max}"),
                );
            }
        }
        if let Some(v) = c.max_velocity {
            if !(v > 0.0 && v.is_finite()) {
                report.push(
                    FindingKind::InvalidVelocity,
                    id(),
                    format!("max_velocity {v} must be positive"),
                );
            }
        }
        if let Some(rel) = &c.spatial_rel {
            if SpatialRelation::parse(rel).is_err() {
                report.push(
                    FindingKind::UnknownRelation,
                    id(),
                    format!("unknown spatial relation {rel:?}"),
                );
            }
        }
        let needs_joint_def = c.has_angle_limit() || (c.axis.is_some() && c.max_velocity.is_some());
        let side = c.side.unwrap_or(Side::Left);
        if needs_joint_def && resolve_joint(&c.joint, c.axis.as_deref(), side).is_none() {
            report.push(
                FindingKind::Unmeasurable,
                id(),
                format!(
                    "no landmark definition for {} {}",
                    c.joint,
                    c.axis.as_deref().unwrap_or("(any axis)")
                ),
            );
        }
    }

    for indices in by_key.values().filter(|v| v.len() > 1) {
        for (n, &i) in indices.iter().enumerate() {
            for &j in &indices[n + 1..] {
                let (a, b) = (&set.constraints[i], &set.constraints[j]);
                let differs = a.max_angle != b.max_angle
                    || a.min_angle != b.min_angle
                    || a.max_velocity != b.max_velocity;
                if differs {
                    report.push(
                        FindingKind::Conflict,
                        vec![a.constraint_id.clone(), b.constraint_id.clone()],
                        format!("contradictory limits for {}", a.derive_id()),
                    );
                }
            }
        }
    }
    report
}

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Constraint, ConstraintKey, ConstraintSet};

fn stricter(a: Option<f64>, b: Option<f64>, pick: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, y) => x.or(y),
    }
}

fn combine(a: Constraint, b: Constraint) -> Constraint {
    let mut extensions = a.extensions;
    for (k, v) in b.extensions {
        match extensions.get(&k) {
            // keep the canonically smaller value so the result is order-independent
            Some(existing) if existing.to_string() <= v.to_string() => {}
            _ => {
                extensions.insert(k, v);
            }
        }
    }
    Constraint {
        constraint_id: a.constraint_id.min(b.constraint_id),
        max_angle: stricter(a.max_angle, b.max_angle, f64::min),
        min_angle: stricter(a.min_angle, b.min_angle, f64::max),
        max_velocity: stricter(a.max_velocity, b.max_velocity, f64::min),
        urgency: a.urgency.max(b.urgency),
        extensions,
        ..a
    }
}

/// Union of two sets; on a shared joint/side/axis/relation the stricter
/// limits win and urgency is the maximum.
///
/// The result is canonical: constraints sorted by id, residual text sorted
/// and deduplicated, so `merge` is commutative and `merge(x, x)` equals `x`
/// for any canonical `x` (which is what the parser produces).
pub fn merge(a: &ConstraintSet, b: &ConstraintSet) -> ConstraintSet {
    let mut by_key: BTreeMap<ConstraintKey, Constraint> = BTreeMap::new();
    for c in a.constraints.iter().chain(&b.constraints) {
        let key = c.key();
        let merged = match by_key.remove(&key) {
            Some(existing) => combine(existing, c.clone()),
            None => c.clone(),
        };
        by_key.insert(key, merged);
    }
    let mut constraints: Vec<Constraint> = by_key.into_values().collect();
    constraints.sort_by(|x, y| x.constraint_id.cmp(&y.constraint_id));

    let mut residual_text: Vec<String> = a
        .residual_text
        .iter()
        .chain(&b.residual_text)
        .cloned()
        .collect();
    residual_text.sort();
    residual_text.dedup();

    let source_note_id = if a.source_note_id == b.source_note_id || b.source_note_id.is_empty() {
        a.source_note_id.clone()
    } else if a.source_note_id.is_empty() {
        b.source_note_id.clone()
    } else {
        let (lo, hi) = if a.source_note_id <= b.source_note_id {
            (&a.source_note_id, &b.source_note_id)
        } else {
            (&b.source_note_id, &a.source_note_id)
        };
        alloc::format!("{lo}+{hi}")
    };

    ConstraintSet {
        source_note_id,
        constraints,
        residual_text,
    }
}

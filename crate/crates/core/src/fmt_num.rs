//! Number formatting shared by prompts, messages and the canonical schema.

use alloc::string::String;
use core::fmt::Write;

use serde::Serializer;

const MAX_EXACT: f64 = 9_007_199_254_740_992.0; // 2^53

fn as_integer(value: f64) -> Option<i64> {
    if value.is_finite() && value == libm::trunc(value) && value.abs() < MAX_EXACT {
        Some(value as i64)
    } else {
        None
    }
}

/// `90.0` renders as `90`, `89.5` as `89.5`.
pub(crate) fn compact(value: f64) -> String {
    let mut out = String::new();
    match as_integer(value) {
        Some(i) => write!(out, "{i}"),
        None => write!(out, "{value}"),
    }
    .expect("writing to a String");
    out
}

/// Serializes integer-valued floats as JSON integers so `90` stays `90`.
pub(crate) fn serialize_opt<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        None => s.serialize_none(),
        Some(v) => match as_integer(*v) {
            Some(i) => s.serialize_i64(i),
            None => s.serialize_f64(*v),
        },
    }
}

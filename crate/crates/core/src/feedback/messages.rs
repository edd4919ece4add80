use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Deserialize;
use thiserror::Error;

use super::KinematicState;
use crate::fmt_num::compact;

pub const BUNDLED_MESSAGES: &str = include_str!("../../data/messages.v1.json");

const WILDCARD: &str = "*";
const PLACEHOLDERS: [&str; 3] = ["joint", "theta", "limit"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MessageTableError {
    #[error("message table is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported message table version {0}")]
    Version(u32),
    #[error("no wildcard message for {0}")]
    MissingDefault(KinematicState),
    #[error("{0} is silent and cannot carry a message")]
    SilentState(KinematicState),
    #[error("unknown placeholder {{{name}}} in {template:?}")]
    UnknownPlaceholder { name: String, template: String },
}

#[derive(Deserialize)]
struct RawTable {
    version: u32,
    messages: Vec<RawEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    state: KinematicState,
    joint: String,
    template: String,
}

/// Templates keyed by `(state, joint)`, with `*` as the joint fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTable {
    entries: BTreeMap<(KinematicState, String), String>,
}

impl Default for MessageTable {
    fn default() -> Self {
        Self::bundled()
    }
}

fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    template
        .split('{')
        .skip(1)
        .filter_map(|rest| rest.split_once('}').map(|(name, _)| name))
}

impl MessageTable {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_MESSAGES).expect("bundled message table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, MessageTableError> {
        let raw: RawTable =
            serde_json::from_str(text).map_err(|e| MessageTableError::Json(e.to_string()))?;
        if raw.version != 1 {
            return Err(MessageTableError::Version(raw.version));
        }
        let mut entries = BTreeMap::new();
        for entry in raw.messages {
            if entry.state.is_silent() {
                return Err(MessageTableError::SilentState(entry.state));
            }
            if let Some(name) = placeholders(&entry.template).find(|n| !PLACEHOLDERS.contains(n)) {
                return Err(MessageTableError::UnknownPlaceholder {
                    name: name.into(),
                    template: entry.template.clone(),
                });
            }
            entries.insert((entry.state, entry.joint), entry.template);
        }
        for state in KinematicState::ALL.into_iter().filter(|s| !s.is_silent()) {
            if !entries.contains_key(&(state, WILDCARD.into())) {
                return Err(MessageTableError::MissingDefault(state));
            }
        }
        Ok(MessageTable { entries })
    }

    pub fn template(&self, state: KinematicState, joint: &str) -> Option<&str> {
        self.entries
            .get(&(state, joint.into()))
            .or_else(|| self.entries.get(&(state, WILDCARD.into())))
            .map(String::as_str)
    }

    /// Message for `state`, or `None` for silent states.
    ///
    /// `joint` selects the entry; `label` fills `{joint}` (e.g. `left knee`).
    pub fn render(
        &self,
        state: KinematicState,
        joint: &str,
        label: &str,
        theta: Option<f64>,
        limit: Option<f64>,
    ) -> Option<String> {
        if state.is_silent() {
            return None;
        }
        let template = self.template(state, joint)?;
        let num = |v: Option<f64>| v.map(|x| compact(libm::round(x * 10.0) / 10.0)).unwrap_or_default();
        Some(
            template
                .replace("{joint}", label)
                .replace("{theta}", &num(theta))
                .replace("{limit}", &num(limit)),
        )
    }
}

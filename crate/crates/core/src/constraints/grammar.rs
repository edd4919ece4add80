use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex::{Captures, Regex};
use serde::Deserialize;
use thiserror::Error;

use super::{
    ClinicalNote, Constraint, ConstraintKey, ConstraintSet, ExtractionError, ExtractionProvider,
    Urgency,
};
use crate::kinematics::Side;

/// The pattern table shipped with the crate.
pub const BUNDLED_PATTERNS: &str = include_str!("../../data/patterns.v1.json");

const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("pattern table is not valid JSON: {0}")]
    Json(String),
    #[error("unsupported pattern table version {0}")]
    Version(u32),
    #[error("rule {id}: {detail}")]
    Rule { id: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("note is empty")]
    EmptyNote,
    #[error("conflicting limits for {constraint_id}: {field} {first} vs {second}")]
    ConflictingConstraints {
        constraint_id: String,
        field: &'static str,
        first: f64,
        second: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RuleAction {
    MaxAngle,
    MinAngle,
    Range,
    MaxVelocity,
    Spatial { relation: String },
    Pacing { spatial_limit: f64, angular_limit: f64 },
    Urgency { level: Urgency },
}

#[derive(Debug, Clone, Deserialize)]
struct RuleSpec {
    id: String,
    pattern: String,
    #[serde(flatten)]
    action: RuleAction,
}

#[derive(Debug, Deserialize)]
struct TableSpec {
    version: u32,
    joints: Vec<String>,
    #[serde(default)]
    macros: BTreeMap<String, String>,
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
struct Rule {
    id: String,
    action: RuleAction,
    regex: Regex,
}

/// Compiled pattern table. Patterns are matched case-insensitively and may
/// reference `{MACRO}` placeholders defined in the table.
#[derive(Debug, Clone)]
pub struct PatternTable {
    version: u32,
    joints: Vec<String>,
    rules: Vec<Rule>,
}

impl PatternTable {
    pub fn from_json(text: &str) -> Result<Self, GrammarError> {
        let spec: TableSpec =
            serde_json::from_str(text).map_err(|e| GrammarError::Json(e.to_string()))?;
        if spec.version != SUPPORTED_VERSION {
            return Err(GrammarError::Version(spec.version));
        }
        let mut rules = Vec::with_capacity(spec.rules.len());
        for rule in spec.rules {
            let mut pattern = rule.pattern.clone();
            for (name, body) in &spec.macros {
                pattern = pattern.replace(&format!("{{{name}}}"), &format!("(?:{body})"));
            }
            let regex = Regex::new(&format!("(?i){pattern}")).map_err(|e| GrammarError::Rule {
                id: rule.id.clone(),
                detail: e.to_string(),
            })?;
            let needs: &[&str] = match rule.action {
                RuleAction::MaxAngle | RuleAction::MinAngle | RuleAction::MaxVelocity => {
                    &["joint", "axis", "value"]
                }
                RuleAction::Range => &["joint", "axis", "min", "max"],
                RuleAction::Spatial { .. } => &["joint"],
                RuleAction::Pacing { .. } | RuleAction::Urgency { .. } => &[],
            };
            let names: Vec<&str> = regex.capture_names().flatten().collect();
            if let Some(missing) = needs.iter().find(|n| !names.contains(n)) {
                return Err(GrammarError::Rule {
                    id: rule.id,
                    detail: format!("pattern lacks named group {missing:?}"),
                });
            }
            rules.push(Rule {
                id: rule.id,
                action: rule.action,
                regex,
            });
        }
        Ok(PatternTable {
            version: spec.version,
            joints: spec.joints,
            rules,
        })
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_PATTERNS).expect("bundled pattern table is valid")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    fn joint(&self, raw: &str) -> String {
        let lower = raw.trim().to_lowercase();
        if !self.joints.contains(&lower) {
            if let Some(singular) = lower.strip_suffix('s') {
                if self.joints.iter().any(|j| j == singular) {
                    return singular.to_string();
                }
            }
        }
        lower
    }
}

/// How one sentence of a note was used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceUse {
    pub text: String,
    /// Ids of the rules that matched; empty means the sentence is residual.
    pub rules: Vec<String>,
}

/// Splits on `.`, `!`, `?`, `;` followed by whitespace or end of text, and
/// on line breaks. Decimal points are left alone.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        let boundary = match b {
            b'\n' | b'\r' => Some(i),
            b'.' | b'!' | b'?' | b';' => {
                let next = bytes.get(i + 1);
                if next.is_none() || next.is_some_and(|c| c.is_ascii_whitespace()) {
                    Some(i + 1)
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(end) = boundary {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Default)]
struct Extraction {
    drafts: BTreeMap<ConstraintKey, Constraint>,
}

impl Extraction {
    fn slot(&mut self, key: ConstraintKey) -> &mut Constraint {
        self.drafts.entry(key).or_insert_with_key(|key| {
            let mut c = Constraint::new(key.joint.clone());
            c.side = key.side;
            c.axis = key.axis.clone();
            c.spatial_rel = key.spatial_rel.clone();
            c.with_id()
        })
    }
}

fn set_limit(
    slot: &mut Option<f64>,
    value: f64,
    field: &'static str,
    id: &str,
) -> Result<(), ParseError> {
    match *slot {
        Some(existing) if existing != value => Err(ParseError::ConflictingConstraints {
            constraint_id: id.to_string(),
            field,
            first: existing,
            second: value,
        }),
        _ => {
            *slot = Some(value);
            Ok(())
        }
    }
}

fn number(caps: &Captures<'_>, group: &str) -> Option<f64> {
    caps.name(group)?.as_str().parse().ok()
}

impl NoteParser {
    pub fn new(table: PatternTable) -> Self {
        NoteParser { table }
    }

    pub fn table(&self) -> &PatternTable {
        &self.table
    }

    pub fn parse(&self, note: &ClinicalNote) -> Result<ConstraintSet, ParseError> {
        self.parse_traced(note).map(|(set, _)| set)
    }

    /// Parses a note and reports which rules consumed each sentence.
    pub fn parse_traced(
        &self,
        note: &ClinicalNote,
    ) -> Result<(ConstraintSet, Vec<SentenceUse>), ParseError> {
        if note.text.trim().is_empty() {
            return Err(ParseError::EmptyNote);
        }
        let mut ex = Extraction::default();
        let mut uses = Vec::new();
        let mut urgency = Urgency::Normal;
        let mut pacing: Option<(f64, f64)> = None;
        // sentences whose only contribution is a note-level modifier
        let mut modifier_only = Vec::new();

        for sentence in sentences(&note.text) {
            let mut matched = Vec::new();
            let mut made_constraint = false;
            for rule in &self.table.rules {
                let mut hit = false;
                for caps in rule.regex.captures_iter(sentence) {
                    hit = true;
                    let side = caps.name("side").and_then(|m| Side::parse(m.as_str()));
                    let joint = caps.name("joint").map(|m| self.table.joint(m.as_str()));
                    let axis = caps.name("axis").map(|m| m.as_str().to_lowercase());
                    match &rule.action {
                        RuleAction::Urgency { level } => urgency = urgency.max(*level),
                        RuleAction::Pacing {
                            spatial_limit,
                            angular_limit,
                        } => pacing = Some((*spatial_limit, *angular_limit)),
                        RuleAction::Spatial { relation } => {
                            let key = ConstraintKey {
                                joint: joint.expect("validated group"),
                                side,
                                axis: None,
                                spatial_rel: Some(relation.clone()),
                            };
                            ex.slot(key);
                            made_constraint = true;
                        }
                        action => {
                            let key = ConstraintKey {
                                joint: joint.expect("validated group"),
                                side,
                                axis,
                                spatial_rel: None,
                            };
                            let c = ex.slot(key);
                            let id = c.constraint_id.clone();
                            match action {
                                RuleAction::MaxAngle => {
                                    if let Some(v) = number(&caps, "value") {
                                        set_limit(&mut c.max_angle, v, "max_angle", &id)?;
                                    }
                                }
                                RuleAction::MinAngle => {
                                    if let Some(v) = number(&caps, "value") {
                                        set_limit(&mut c.min_angle, v, "min_angle", &id)?;
                                    }
                                }
                                RuleAction::MaxVelocity => {
                                    if let Some(v) = number(&caps, "value") {
                                        set_limit(&mut c.max_velocity, v, "max_velocity", &id)?;
                                    }
                                }
                                RuleAction::Range => {
                                    if let (Some(lo), Some(hi)) =
                                        (number(&caps, "min"), number(&caps, "max"))
                                    {
                                        set_limit(&mut c.min_angle, lo, "min_angle", &id)?;
                                        set_limit(&mut c.max_angle, hi, "max_angle", &id)?;
                                    }
                                }
                                _ => unreachable!("handled above"),
                            }
                            made_constraint = true;
                        }
                    }
                }
                if hit {
                    matched.push(rule.id.clone());
                }
            }
            if !matched.is_empty() && !made_constraint {
                modifier_only.push(uses.len());
            }
            uses.push(SentenceUse {
                text: sentence.to_string(),
                rules: matched,
            });
        }

        let mut constraints: Vec<Constraint> = ex.drafts.into_values().collect();

        if constraints.is_empty() {
            // modifiers with nothing to modify are kept as residual text
            for &i in &modifier_only {
                uses[i].rules.clear();
            }
        }
        for c in &mut constraints {
            c.urgency = c.urgency.max(urgency);
            if let (Some((spatial, angular)), None) = (pacing, c.max_velocity) {
                c.max_velocity = Some(if c.axis.is_some() { angular } else { spatial });
            }
        }
        constraints.sort_by(|a, b| a.constraint_id.cmp(&b.constraint_id));

        let residual_text = uses
            .iter()
            .filter(|u| u.rules.is_empty())
            .map(|u| u.text.clone())
            .collect();
        Ok((
            ConstraintSet {
                source_note_id: note.note_id.clone(),
                constraints,
                residual_text,
            },
            uses,
        ))
    }
}

/// The deterministic extractor.
#[derive(Debug, Clone)]
pub struct NoteParser {
    table: PatternTable,
}

impl Default for NoteParser {
    fn default() -> Self {
        NoteParser::new(PatternTable::bundled())
    }
}

impl ExtractionProvider for NoteParser {
    fn extract(&self, note: &ClinicalNote) -> Result<ConstraintSet, ExtractionError> {
        Ok(self.parse(note)?)
    }
}

/// Parses `note` with the bundled pattern table.
pub fn parse_note(note: &ClinicalNote) -> Result<ConstraintSet, ParseError> {
    NoteParser::default().parse(note)
}

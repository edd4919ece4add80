//! Demonstration-video prompt construction behind a pluggable provider.
//!
//! [`build_prompt`] is a pure function of the constraint set, the template
//! and the safety margin. Providers only ever see the finished prompt.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintSet};
use crate::fmt_num::compact;

pub const BUNDLED_TEMPLATE: &str = include_str!("../../data/prompt.v1.txt");
pub const DEFAULT_SAFETY_MARGIN_DEG: f64 = 1.0;

const REQUIRED_SECTIONS: [&str; 4] = ["prompt", "angle", "angle.min", "pacing"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPrompt {
    pub text: String,
    /// Lowest demonstrated cap across angle constraints.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "crate::fmt_num::serialize_opt"
    )]
    pub stop_angle_deg: Option<f64>,
    pub constraint_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("no constraint can be rendered into a prompt")]
    NoRenderableConstraint,
    #[error("synthesis provider unavailable: {0}")]
    ProviderUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("template line {line}: text outside any section")]
    Orphan { line: usize },
    #[error("template line {line}: section [{name}] defined twice")]
    Duplicate { line: usize, name: String },
    #[error("template is missing section [{0}]")]
    Missing(&'static str),
    #[error("safety margin must be positive, got {0}")]
    Margin(f64),
}

/// Sectioned text template. `#` lines before the first section are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    sections: BTreeMap<String, String>,
    safety_margin_deg: f64,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptTemplate {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TEMPLATE).expect("bundled prompt template is valid")
    }

    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        let mut flush = |cur: Option<(String, Vec<&str>)>, line| -> Result<(), TemplateError> {
            if let Some((name, body)) = cur {
                let body = body.join("\n").trim().into();
                if sections.insert(name.clone(), body).is_some() {
                    return Err(TemplateError::Duplicate { line, name });
                }
            }
            Ok(())
        };
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                flush(current.take(), i + 1)?;
                current = Some((name.trim().into(), Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !(trimmed.is_empty() || trimmed.starts_with('#')) {
                return Err(TemplateError::Orphan { line: i + 1 });
            }
        }
        flush(current.take(), text.lines().count())?;
        for name in REQUIRED_SECTIONS {
            if !sections.contains_key(name) {
                return Err(TemplateError::Missing(name));
            }
        }
        Ok(PromptTemplate {
            sections,
            safety_margin_deg: DEFAULT_SAFETY_MARGIN_DEG,
        })
    }

    pub fn with_safety_margin(mut self, margin_deg: f64) -> Result<Self, TemplateError> {
        if !(margin_deg > 0.0 && margin_deg.is_finite()) {
            return Err(TemplateError::Margin(margin_deg));
        }
        self.safety_margin_deg = margin_deg;
        Ok(self)
    }

    pub fn safety_margin_deg(&self) -> f64 {
        self.safety_margin_deg
    }

    fn section(&self, name: &str) -> Option<&str> {
        self.sections.get(name).map(String::as_str)
    }
}

/// Demonstrated cap for a limit: `max_angle - margin`, floored at zero.
pub fn stop_angle(max_angle: f64, margin_deg: f64) -> f64 {
    (max_angle - margin_deg).max(0.0)
}

fn fill(template: &str, c: &Constraint, stop: Option<f64>) -> String {
    let side = c
        .side
        .map(|s| format!("{} ", s.as_str()))
        .unwrap_or_default();
    template
        .replace("{side}", &side)
        .replace("{joint}", &c.joint)
        .replace("{axis}", c.axis.as_deref().unwrap_or("movement"))
        .replace("{stop_angle}", &stop.map(compact).unwrap_or_default())
        .replace("{min_angle}", &c.min_angle.map(compact).unwrap_or_default())
}

/// Renders `set` into a generation prompt.
pub fn build_prompt(
    set: &ConstraintSet,
    template: &PromptTemplate,
) -> Result<SynthesisPrompt, SynthesisError> {
    let mut movements = Vec::new();
    let mut ids = Vec::new();
    let mut stop_min: Option<f64> = None;
    let mut paced = false;
    for c in &set.constraints {
        let mut rendered = false;
        if let Some(max) = c.max_angle {
            let stop = stop_angle(max, template.safety_margin_deg);
            stop_min = Some(stop_min.map_or(stop, |s| s.min(stop)));
            movements.push(fill(template.section("angle").unwrap_or_default(), c, Some(stop)));
            rendered = true;
        } else if c.min_angle.is_some() {
            movements.push(fill(template.section("angle.min").unwrap_or_default(), c, None));
            rendered = true;
        }
        if let Some(section) = c
            .spatial_rel
            .as_deref()
            .and_then(|rel| template.section(&format!("spatial.{rel}")))
        {
            movements.push(fill(section, c, None));
            rendered = true;
        }
        if rendered {
            paced |= c.max_velocity.is_some();
            ids.push(c.constraint_id.clone());
        }
    }
    if ids.is_empty() {
        return Err(SynthesisError::NoRenderableConstraint);
    }
    let pacing = if paced {
        template.section("pacing").unwrap_or_default()
    } else {
        ""
    };
    let body = template
        .section("prompt")
        .unwrap_or_default()
        .replace("{movements}", &movements.join("\n"))
        .replace("{pacing}", pacing);
    let text = body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(SynthesisPrompt {
        text,
        stop_angle_deg: stop_min,
        constraint_ids: ids,
    })
}

/// Anything that turns a prompt into a video reference.
pub trait SynthesisProvider {
    fn synthesize(&self, prompt: &SynthesisPrompt) -> Result<String, SynthesisError>;
}

impl<P: SynthesisProvider + ?Sized> SynthesisProvider for &P {
    fn synthesize(&self, prompt: &SynthesisPrompt) -> Result<String, SynthesisError> {
        (**self).synthesize(prompt)
    }
}

/// Content-addressed placeholder: the same prompt always maps to the same URL.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSynthesis;

impl SynthesisProvider for MockSynthesis {
    fn synthesize(&self, prompt: &SynthesisPrompt) -> Result<String, SynthesisError> {
        let digest = Sha256::digest(prompt.text.as_bytes());
        let mut url = String::from("mock://physio-video/");
        for byte in &digest[..8] {
            url.push_str(&format!("{byte:02x}"));
        }
        url.push_str(".mp4");
        Ok(url)
    }
}

/// Provider that always fails, for running sessions without a video backend.
#[derive(Debug, Clone, Default)]
pub struct Offline(pub String);

impl SynthesisProvider for Offline {
    fn synthesize(&self, _prompt: &SynthesisPrompt) -> Result<String, SynthesisError> {
        Err(SynthesisError::ProviderUnavailable(if self.0.is_empty() {
            "offline".into()
        } else {
            self.0.clone()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Urgency;
    use alloc::vec;
    use proptest::prelude::*;

    fn shoulder(max: f64) -> Constraint {
        let mut c = Constraint::new("shoulder");
        c.axis = Some("abduction".into());
        c.max_angle = Some(max);
        c.urgency = Urgency::High;
        c.with_id()
    }

    fn knee() -> Constraint {
        let mut c = Constraint::new("knee");
        c.spatial_rel = Some("behind_toe".into());
        c.max_velocity = Some(0.5);
        c.with_id()
    }

    fn set(cs: Vec<Constraint>) -> ConstraintSet {
        ConstraintSet {
            source_note_id: "n".into(),
            constraints: cs,
            residual_text: vec![],
        }
    }

    #[test]
    fn shoulder_prompt_stops_one_degree_short() {
        let p = build_prompt(&set(vec![shoulder(90.0)]), &PromptTemplate::bundled()).unwrap();
        assert!(p.text.contains("stops at 89 degrees"), "{}", p.text);
        assert_eq!(p.stop_angle_deg, Some(89.0));
        assert_eq!(p.constraint_ids, ["shoulder.abduction"]);
        assert!(!p.text.contains("slow, controlled tempo"));
    }

    #[test]
    fn knee_prompt_has_tracking_and_pacing() {
        let p = build_prompt(&set(vec![knee()]), &PromptTemplate::bundled()).unwrap();
        assert!(p.text.contains("knee behind the toes"), "{}", p.text);
        assert!(p.text.contains("slow, controlled tempo"));
        assert_eq!(p.stop_angle_deg, None);
        assert!(!p.text.contains('{'));
    }

    #[test]
    fn empty_set_is_not_renderable() {
        assert_eq!(
            build_prompt(&set(vec![]), &PromptTemplate::bundled()),
            Err(SynthesisError::NoRenderableConstraint)
        );
    }

    #[test]
    fn mock_is_content_addressed() {
        let p = build_prompt(&set(vec![shoulder(90.0)]), &PromptTemplate::bundled()).unwrap();
        let a = MockSynthesis.synthesize(&p).unwrap();
        assert_eq!(a, MockSynthesis.synthesize(&p.clone()).unwrap());
        assert!(a.starts_with("mock://physio-video/") && a.ends_with(".mp4"));
        assert_eq!(a.len(), "mock://physio-video/".len() + 16 + 4);
        let q = build_prompt(&set(vec![shoulder(80.0)]), &PromptTemplate::bundled()).unwrap();
        assert_ne!(a, MockSynthesis.synthesize(&q).unwrap());
    }

    #[test]
    fn template_errors() {
        assert_eq!(
            PromptTemplate::parse("stray\n[prompt]\nx"),
            Err(TemplateError::Orphan { line: 1 })
        );
        assert_eq!(
            PromptTemplate::parse("[prompt]\nx\n[angle]\ny"),
            Err(TemplateError::Missing("angle.min"))
        );
        assert!(PromptTemplate::bundled().with_safety_margin(0.0).is_err());
        let t = PromptTemplate::bundled().with_safety_margin(2.5).unwrap();
        let p = build_prompt(&set(vec![shoulder(90.0)]), &t).unwrap();
        assert!(p.text.contains("stops at 87.5 degrees"));
    }

    proptest! {
        #[test]
        fn stop_below_every_max(maxes in prop::collection::vec(0.01f64..=180.0, 1..5), margin in 0.1f64..10.0) {
            let cs: Vec<_> = maxes
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let mut c = shoulder(m);
                    c.constraint_id = format!("c{i}");
                    c
                })
                .collect();
            let t = PromptTemplate::bundled().with_safety_margin(margin).unwrap();
            let p = build_prompt(&set(cs), &t).unwrap();
            let stop = p.stop_angle_deg.unwrap();
            for m in maxes {
                prop_assert!(stop < m);
            }
        }
    }
}

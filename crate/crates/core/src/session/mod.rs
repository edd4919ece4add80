//! The two-phase loop: pre-session extraction and synthesis, then per-frame
//! evaluation against the shared [`PatientState`].

mod engine;
mod log;

pub use engine::{Session, SessionConfig, SessionError, StepError};
pub use log::{
    summarize, DropReason, DropRecord, FrameEval, IntegrityError, LatencyStats, LogRecord,
    SessionLog, SessionSummary, SummaryError,
};

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    validate, ClinicalNote, ConstraintSet, ExtractionError, ExtractionProvider, ParseError,
    ValidationReport,
};
use crate::feedback::FeedbackEvent;
use crate::kinematics::{JointAngleSample, VelocitySample};
use crate::synthesis::{build_prompt, PromptTemplate, SynthesisProvider};

/// Source of processing-latency timestamps.
pub trait Clock {
    fn now_us(&self) -> u64;
}

/// Always reads zero; logs produced under it are fully deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_us(&self) -> u64 {
        0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_us(&self) -> u64 {
        (**self).now_us()
    }
}

/// Latest kinematic readings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseSnapshot {
    pub frame_id: Option<u64>,
    pub t_ms: Option<u64>,
    pub angles: Vec<JointAngleSample>,
    pub velocities: Vec<VelocitySample>,
}

/// The state object shared by every stage of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    pub session_id: String,
    pub started_at_ms: u64,
    pub notes: ClinicalNote,
    pub constraints: ConstraintSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_url: Option<String>,
    #[serde(default)]
    pub pose: PoseSnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PatientState {
    pub fn new(notes: ClinicalNote, constraints: ConstraintSet) -> Self {
        PatientState {
            session_id: notes.note_id.clone(),
            started_at_ms: 0,
            notes,
            constraints,
            video_url: None,
            pose: PoseSnapshot::default(),
            feedback: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_session(mut self, session_id: impl Into<String>, started_at_ms: u64) -> Self {
        self.session_id = session_id.into();
        self.started_at_ms = started_at_ms;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Phase1Error {
    #[error("no constraints could be extracted from the note")]
    NoConstraintsExtracted,
    #[error(transparent)]
    Extraction(ExtractionError),
    #[error("extracted constraints failed validation ({} findings)", .0.findings.len())]
    InvalidConstraints(ValidationReport),
}

/// Extracts and validates constraints, then asks `synthesis` for a
/// demonstration video. A synthesis failure only adds a warning.
pub fn phase1<E, S>(
    note: &ClinicalNote,
    extraction: &E,
    synthesis: &S,
    template: &PromptTemplate,
) -> Result<PatientState, Phase1Error>
where
    E: ExtractionProvider + ?Sized,
    S: SynthesisProvider + ?Sized,
{
    let constraints = match extraction.extract(note) {
        Ok(set) => set,
        Err(ExtractionError::Parse(ParseError::EmptyNote)) => {
            return Err(Phase1Error::NoConstraintsExtracted)
        }
        Err(e) => return Err(Phase1Error::Extraction(e)),
    };
    if constraints.is_empty() {
        return Err(Phase1Error::NoConstraintsExtracted);
    }
    let report = validate(&constraints);
    if !report.is_valid() {
        return Err(Phase1Error::InvalidConstraints(report));
    }
    let mut state = PatientState::new(note.clone(), constraints);
    match build_prompt(&state.constraints, template).and_then(|p| synthesis.synthesize(&p)) {
        Ok(url) => state.video_url = Some(url),
        Err(e) => {
            ::log::warn!("session {}: video synthesis skipped: {e}", state.session_id);
            state.warnings.push(e.to_string());
        }
    }
    Ok(state)
}

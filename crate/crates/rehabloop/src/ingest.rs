//! Turning protocol lines into session steps.
//!
//! Every line that does not produce an evaluation leaves a drop record in
//! the session log and an `error` record for the peer.

use rehabloop_core::constraints::{ClinicalNote, NoteParser, Prebuilt};
use rehabloop_core::feedback::FeedbackEvent;
use rehabloop_core::kinematics::PoseFrame;
use rehabloop_core::session::{
    phase1, Clock, DropReason, DropRecord, PatientState, Phase1Error, Session, SessionConfig,
    SessionError, StepError,
};
use rehabloop_core::synthesis::{PromptTemplate, SynthesisProvider};

use crate::protocol::{decode_frame, probe_frame_id, record_type, ErrorRecord, OpenRecord, Record};
use crate::schema::{from_schema_value, to_schema_value};

pub mod codes {
    pub const BAD_OPEN: &str = "bad_open";
    pub const NO_CONSTRAINTS: &str = "no_constraints";
    pub const INVALID_CONSTRAINTS: &str = "invalid_constraints";
    pub const EXTRACTION_FAILED: &str = "extraction_failed";
    pub const STALE_FRAME: &str = "stale_frame";
}

/// A line after decoding, ready to be applied to a session.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    /// Blank lines and client heartbeats.
    Skip,
    Frame(PoseFrame),
    Rejected { drop: DropRecord, error: ErrorRecord },
}

impl Inbound {
    pub fn classify(line: &[u8]) -> Inbound {
        if line.iter().all(u8::is_ascii_whitespace) {
            return Inbound::Skip;
        }
        match decode_frame(line) {
            Ok(frame) => Inbound::Frame(frame),
            Err(_) if record_type(line).as_deref() == Some("heartbeat") => Inbound::Skip,
            Err(e) => {
                let frame_id = probe_frame_id(line);
                let detail = format!("{}: {e}", e.code());
                Inbound::Rejected {
                    drop: DropRecord::new(DropReason::Malformed, frame_id, detail.clone()),
                    error: ErrorRecord {
                        code: e.code().into(),
                        detail,
                        frame_id,
                    },
                }
            }
        }
    }
}

/// Builds the patient state an `open` record asks for. Prebuilt constraints
/// take precedence over note text.
pub fn open_state(
    open: &OpenRecord,
    fallback_id: &str,
    synthesis: &dyn SynthesisProvider,
    template: &PromptTemplate,
) -> Result<PatientState, ErrorRecord> {
    let session_id = open
        .session_id
        .clone()
        .or_else(|| open.note_id.clone())
        .unwrap_or_else(|| fallback_id.to_string());
    let note_id = open.note_id.clone().unwrap_or_else(|| session_id.clone());
    let note = ClinicalNote::new(note_id, open.note.clone().unwrap_or_default());
    let result = match &open.constraints {
        Some(value) => {
            let mut set = from_schema_value(value.clone())
                .map_err(|e| ErrorRecord::new(codes::BAD_OPEN, e.to_string()))?;
            if set.source_note_id.is_empty() {
                set.source_note_id = note.note_id.clone();
            }
            phase1(&note, &Prebuilt(set), &synthesis, template)
        }
        None if open.note.is_some() => phase1(&note, &NoteParser::default(), &synthesis, template),
        None => {
            return Err(ErrorRecord::new(
                codes::BAD_OPEN,
                "open record needs a note or constraints",
            ))
        }
    };
    let state = result.map_err(|e| match &e {
        Phase1Error::NoConstraintsExtracted => ErrorRecord::new(codes::NO_CONSTRAINTS, e.to_string()),
        Phase1Error::Extraction(_) => ErrorRecord::new(codes::EXTRACTION_FAILED, e.to_string()),
        Phase1Error::InvalidConstraints(report) => {
            let findings: Vec<&str> = report.findings.iter().map(|f| f.message.as_str()).collect();
            ErrorRecord::new(codes::INVALID_CONSTRAINTS, findings.join("; "))
        }
    })?;
    Ok(state.with_session(session_id, 0))
}

/// Session configuration with the open record's feedback overrides applied.
pub fn open_config(open: &OpenRecord, base: SessionConfig) -> SessionConfig {
    SessionConfig {
        feedback: open.config.unwrap_or(base.feedback),
        ..base
    }
}

pub fn session_error(e: &SessionError) -> ErrorRecord {
    let code = match e {
        SessionError::NoConstraints => codes::NO_CONSTRAINTS,
        SessionError::InvalidConstraints(_) => codes::INVALID_CONSTRAINTS,
        SessionError::Config(_) => codes::BAD_OPEN,
    };
    ErrorRecord::new(code, e.to_string())
}

/// The acknowledgement sent back for a successful open.
pub fn open_ack<C: Clock>(session: &Session<C>) -> Record {
    let state = session.state();
    Record::Open(OpenRecord {
        session_id: Some(state.session_id.clone()),
        note_id: Some(state.notes.note_id.clone()),
        note: None,
        constraints: Some(to_schema_value(&state.constraints)),
        config: Some(session.config().feedback),
        video_url: state.video_url.clone(),
    })
}

/// A session fed one protocol line at a time.
pub struct Ingest<C: Clock> {
    session: Session<C>,
}

impl<C: Clock> Ingest<C> {
    pub fn new(session: Session<C>) -> Self {
        Ingest { session }
    }

    pub fn session(&self) -> &Session<C> {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session<C> {
        &mut self.session
    }

    pub fn into_session(self) -> Session<C> {
        self.session
    }

    pub fn handle_line(&mut self, line: &[u8]) -> Result<Option<FeedbackEvent>, ErrorRecord> {
        self.apply(Inbound::classify(line))
    }

    pub fn apply(&mut self, inbound: Inbound) -> Result<Option<FeedbackEvent>, ErrorRecord> {
        match inbound {
            Inbound::Skip => Ok(None),
            Inbound::Frame(frame) => self.step(&frame),
            Inbound::Rejected { drop, error } => {
                self.session.record_drop(drop);
                Err(error)
            }
        }
    }

    pub fn step(&mut self, frame: &PoseFrame) -> Result<Option<FeedbackEvent>, ErrorRecord> {
        self.session.step(frame).map_err(|e| {
            let StepError::StaleFrame { frame_id, .. } = e;
            ErrorRecord {
                code: codes::STALE_FRAME.into(),
                detail: e.to_string(),
                frame_id: Some(frame_id),
            }
        })
    }

    /// Logs a frame displaced before evaluation.
    pub fn backpressure(&mut self, frame: &PoseFrame) {
        self.session.record_drop(DropRecord {
            t_ms: Some(frame.t_ms),
            ..DropRecord::new(DropReason::Backpressure, Some(frame.frame_id), "displaced by newer frame")
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::encode_frame;
    use rehabloop_core::feedback::KinematicState;
    use rehabloop_core::synthesis::MockSynthesis;
    use rehabloop_core::trajectory::{PoseGenerator, TrajectorySpec};

    fn open_note(note: &str) -> OpenRecord {
        OpenRecord {
            note: Some(note.into()),
            ..OpenRecord::default()
        }
    }

    fn ingest() -> Ingest<rehabloop_core::session::FrozenClock> {
        let open = open_note("Max 90 deg shoulder abduction.");
        let state = open_state(&open, "s1", &MockSynthesis, &PromptTemplate::bundled()).unwrap();
        Ingest::new(Session::new(state, SessionConfig::default()).unwrap())
    }

    #[test]
    fn open_from_note_and_from_constraints() {
        let state = open_state(
            &open_note("Max 90 deg shoulder abduction."),
            "s1",
            &MockSynthesis,
            &PromptTemplate::bundled(),
        )
        .unwrap();
        assert_eq!(state.session_id, "s1");
        assert!(state.video_url.is_some());
        let open = OpenRecord {
            session_id: Some("k".into()),
            constraints: Some(
                serde_json::from_str(
                    r#"{"version":1,"constraints":[{"joint":"knee","spatial_rel":"behind_toe"}]}"#,
                )
                .unwrap(),
            ),
            ..OpenRecord::default()
        };
        let state = open_state(&open, "s2", &MockSynthesis, &PromptTemplate::bundled()).unwrap();
        assert_eq!(state.constraints.constraints[0].constraint_id, "knee.behind_toe");
        assert_eq!(state.session_id, "k");
    }

    #[test]
    fn open_failures_have_codes() {
        let t = PromptTemplate::bundled();
        let code = |o: &OpenRecord| open_state(o, "x", &MockSynthesis, &t).unwrap_err().code;
        assert_eq!(code(&OpenRecord::default()), codes::BAD_OPEN);
        assert_eq!(code(&open_note("Feeling fine.")), codes::NO_CONSTRAINTS);
        let bad = OpenRecord {
            constraints: Some(serde_json::json!({"version":1,"constraints":[{"joint":"hip","axis":"flexion","max_angle":500}]})),
            ..OpenRecord::default()
        };
        assert_eq!(code(&bad), codes::INVALID_CONSTRAINTS);
        let schema = OpenRecord {
            constraints: Some(serde_json::json!({"version":3,"constraints":[]})),
            ..OpenRecord::default()
        };
        assert_eq!(code(&schema), codes::BAD_OPEN);
    }

    #[test]
    fn every_bad_line_leaves_a_drop() {
        let mut ing = ingest();
        let mut g = PoseGenerator::new(TrajectorySpec::shoulder_abduction(90.0, 1)).unwrap();
        let good = encode_frame(&g.frame_at_angle(0, 0, 85.0));
        assert_eq!(ing.handle_line(good.as_bytes()), Ok(None));
        assert_eq!(ing.handle_line(b"\n"), Ok(None));
        assert_eq!(ing.handle_line(b"{\"type\":\"heartbeat\"}\n"), Ok(None));
        let err = ing.handle_line(b"{\"type\":\"frame\",\"frame_id\":1,\"t_ms\":\"x\"}").unwrap_err();
        assert_eq!((err.code.as_str(), err.frame_id), ("malformed_record", Some(1)));
        let err = ing.handle_line(b"\xff\xfe").unwrap_err();
        assert_eq!(err.code, "malformed_record");
        let stale = encode_frame(&g.frame_at_angle(0, 0, 85.0));
        assert_eq!(ing.handle_line(stale.as_bytes()).unwrap_err().code, codes::STALE_FRAME);
        for i in 2..5 {
            let line = encode_frame(&g.frame_at_angle(i, i * 33, 85.0));
            ing.handle_line(line.as_bytes()).unwrap();
        }
        let log = ing.session().log();
        assert_eq!(log.drops().count(), 3);
        assert_eq!(log.check_integrity(), Ok(()));
        assert_eq!(
            log.events().map(|e| e.state).collect::<Vec<_>>(),
            vec![KinematicState::Optimal]
        );
    }
}

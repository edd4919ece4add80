//! Note in, synthetic exercise through a full session, events and summary out.

use rehabloop_core::constraints::{ClinicalNote, NoteParser};
use rehabloop_core::feedback::FeedbackEvent;
use rehabloop_core::kinematics::{resolve_joint, Side};
use rehabloop_core::session::{
    phase1, PatientState, Phase1Error, Session, SessionConfig, SessionError, SessionLog,
    SessionSummary, SummaryError,
};
use rehabloop_core::synthesis::{MockSynthesis, PromptTemplate};
use rehabloop_core::trajectory::{PoseGenerator, TrajectoryError, TrajectorySpec};
use thiserror::Error;

use crate::providers::EngineClock;

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub note: ClinicalNote,
    pub peak_angle_deg: f64,
    pub repetitions: u32,
    pub period_ms: u64,
    pub fps: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Side driven when the constraint does not name one.
    pub side: Side,
    pub session: SessionConfig,
    pub logical_clock: bool,
}

impl SimulateOptions {
    pub fn new(note: ClinicalNote, peak_angle_deg: f64) -> Self {
        SimulateOptions {
            note,
            peak_angle_deg,
            repetitions: 3,
            period_ms: 4000,
            fps: 30.0,
            noise_sigma: 0.0,
            seed: 0,
            side: Side::Left,
            session: SessionConfig::default(),
            logical_clock: false,
        }
    }
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub state: PatientState,
    pub spec: TrajectorySpec,
    pub events: Vec<FeedbackEvent>,
    pub summary: SessionSummary,
    pub log: SessionLog,
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Phase1(#[from] Phase1Error),
    #[error("no angle constraint with a measurable joint to drive")]
    NoMeasurableJoint,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// Drives the first measurable angle-limited joint through the cosine ramp.
pub fn simulate(opts: &SimulateOptions) -> Result<SimulateOutcome, SimulateError> {
    let state = phase1(&opts.note, &NoteParser::default(), &MockSynthesis, &PromptTemplate::bundled())?;
    let joint = state
        .constraints
        .constraints
        .iter()
        .filter(|c| c.has_angle_limit())
        .find_map(|c| resolve_joint(&c.joint, c.axis.as_deref(), c.side.unwrap_or(opts.side)))
        .ok_or(SimulateError::NoMeasurableJoint)?;
    let spec = TrajectorySpec {
        joint,
        peak_angle_deg: opts.peak_angle_deg,
        period_ms: opts.period_ms,
        repetitions: opts.repetitions,
        fps: opts.fps,
        noise_sigma: opts.noise_sigma,
        seed: opts.seed,
    };
    let generator = PoseGenerator::new(spec)?;
    let mut session = Session::with_clock(state, opts.session, EngineClock::new(opts.logical_clock))?;
    let mut events = Vec::new();
    for frame in generator {
        if let Some(e) = session.step(&frame).expect("generated frames are ordered") {
            events.push(e);
        }
    }
    let summary = session.summarize()?;
    let (state, log) = session.into_parts();
    Ok(SimulateOutcome {
        state,
        spec,
        events,
        summary,
        log,
    })
}

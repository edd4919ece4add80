use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::{summarize, DropReason, DropRecord, FrameEval, LogRecord, SessionLog, SessionSummary, SummaryError};
use super::{Clock, FrozenClock, PatientState, PoseSnapshot};
use crate::constraints::{validate, Constraint, ValidationReport};
use crate::feedback::{
    classify_angle, classify_velocity, resolve, ConfigError, Debouncer, FeedbackConfig,
    FeedbackEvent, KinematicState, MessageTable,
};
use crate::kinematics::{
    angular_velocity, body_length, eval_spatial_relation, landmark_speed, measure_joint,
    resolve_joint, BodyPart, JointAngleSample, JointDef, KinematicsConfig, LandmarkName, PoseFrame,
    Side, SpatialRelation, Vec3, VelocitySample,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub feedback: FeedbackConfig,
    pub kinematics: KinematicsConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session has no constraints")]
    NoConstraints,
    #[error("constraints failed validation ({} findings)", .0.findings.len())]
    InvalidConstraints(ValidationReport),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("stale frame {frame_id} at {t_ms} ms (last processed {last_frame_id} at {last_t_ms} ms)")]
    StaleFrame {
        frame_id: u64,
        t_ms: u64,
        last_frame_id: u64,
        last_t_ms: u64,
    },
}

/// Measurement plan for one side of one constraint.
#[derive(Debug, Clone)]
struct SidePlan {
    side: Side,
    joint: Option<JointDef>,
    /// Landmark tracked for linear speed.
    tracked: Option<LandmarkName>,
    angles: VecDeque<(u64, f64)>,
    positions: VecDeque<(u64, Vec3)>,
}

#[derive(Debug, Clone)]
struct Plan {
    index: usize,
    sides: Vec<SidePlan>,
    relation: Option<SpatialRelation>,
}

struct Outcome {
    state: KinematicState,
    theta: Option<f64>,
}

fn trim<T>(history: &mut VecDeque<(u64, T)>, t_ms: u64, window_ms: u64) {
    while history
        .front()
        .is_some_and(|&(t, _)| t.saturating_add(window_ms) < t_ms)
    {
        history.pop_front();
    }
}

/// One patient's evaluation loop. Not re-entrant; frames must arrive in
/// increasing `frame_id` and `t_ms` order.
pub struct Session<C: Clock = FrozenClock> {
    state: PatientState,
    cfg: SessionConfig,
    messages: MessageTable,
    plans: Vec<Plan>,
    debouncer: Debouncer,
    last: Option<(u64, u64)>,
    explained: Vec<(u64, u64)>,
    log: SessionLog,
    clock: C,
}

impl Session<FrozenClock> {
    pub fn new(state: PatientState, cfg: SessionConfig) -> Result<Self, SessionError> {
        Session::with_clock(state, cfg, FrozenClock)
    }
}

impl<C: Clock> Session<C> {
    pub fn with_clock(state: PatientState, cfg: SessionConfig, clock: C) -> Result<Self, SessionError> {
        cfg.feedback.validate()?;
        if state.constraints.is_empty() {
            return Err(SessionError::NoConstraints);
        }
        let report = validate(&state.constraints);
        if !report.is_valid() {
            return Err(SessionError::InvalidConstraints(report));
        }
        let plans = state
            .constraints
            .constraints
            .iter()
            .enumerate()
            .map(|(index, c)| plan_for(index, c))
            .collect();
        Ok(Session {
            state,
            cfg,
            messages: MessageTable::bundled(),
            plans,
            debouncer: Debouncer::new(cfg.feedback),
            last: None,
            explained: Vec::new(),
            log: SessionLog::new(),
            clock,
        })
    }

    pub fn with_messages(mut self, messages: MessageTable) -> Self {
        self.messages = messages;
        self
    }

    pub fn state(&self) -> &PatientState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_parts(self) -> (PatientState, SessionLog) {
        (self.state, self.log)
    }

    pub fn summarize(&self) -> Result<SessionSummary, SummaryError> {
        summarize(&self.log)
    }

    pub fn last_frame_id(&self) -> Option<u64> {
        self.last.map(|(id, _)| id)
    }

    /// Logs a frame that never reached [`Session::step`].
    pub fn record_drop(&mut self, record: DropRecord) {
        if let Some(range) = record.range() {
            self.explained.push(range);
        }
        self.log.push(LogRecord::Drop(record));
    }

    /// Evaluates one frame. Measurement failures become `NoData`; only an
    /// out-of-order frame is an error, and it is logged as a drop.
    pub fn step(&mut self, frame: &PoseFrame) -> Result<Option<FeedbackEvent>, StepError> {
        let started = self.clock.now_us();
        if let Some((last_id, last_t)) = self.last {
            if frame.frame_id <= last_id || frame.t_ms <= last_t {
                self.log.push(LogRecord::Drop(DropRecord {
                    t_ms: Some(frame.t_ms),
                    ..DropRecord::new(DropReason::Stale, Some(frame.frame_id), "out of order")
                }));
                return Err(StepError::StaleFrame {
                    frame_id: frame.frame_id,
                    t_ms: frame.t_ms,
                    last_frame_id: last_id,
                    last_t_ms: last_t,
                });
            }
            self.log_gaps(last_id + 1, frame.frame_id);
        }
        self.last = Some((frame.frame_id, frame.t_ms));

        let kin = self.cfg.kinematics;
        let fb = self.cfg.feedback;
        let constraints = &self.state.constraints.constraints;
        let mut snapshot = PoseSnapshot {
            frame_id: Some(frame.frame_id),
            t_ms: Some(frame.t_ms),
            ..PoseSnapshot::default()
        };
        let length = body_length(frame, kin.visibility_floor).ok();
        let mut outcomes = Vec::with_capacity(self.plans.len());
        for plan in &mut self.plans {
            let c = &constraints[plan.index];
            outcomes.push(evaluate(plan, c, frame, length, &kin, &fb, &mut snapshot));
        }

        let resolved = resolve(outcomes.iter().map(|o| o.state));
        let mut angles = BTreeMap::new();
        let mut states = BTreeMap::new();
        for (plan, o) in self.plans.iter().zip(&outcomes) {
            let id = &constraints[plan.index].constraint_id;
            if let Some(theta) = o.theta {
                angles.insert(id.clone(), theta);
            }
            states.insert(id.clone(), o.state);
        }

        let mut event = None;
        if self.debouncer.admit(resolved, frame.t_ms) {
            let winner = self.plans.iter().zip(&outcomes).find(|(_, o)| o.state == resolved);
            if let Some((plan, o)) = winner {
                let c = &constraints[plan.index];
                let limit = c.max_angle.or(c.min_angle);
                if let Some(message) =
                    self.messages.render(resolved, &c.joint, &c.joint_label(), o.theta, limit)
                {
                    event = Some(FeedbackEvent {
                        frame_id: frame.frame_id,
                        t_ms: frame.t_ms,
                        state: resolved,
                        message,
                        theta_deg: o.theta,
                        violated_constraint_id: Some(c.constraint_id.clone()),
                        severity: resolved.severity(),
                    });
                }
            }
        }

        self.state.pose = snapshot;
        if let Some(e) = &event {
            self.state.feedback = Some(e.clone());
        }
        let latency_us = self.clock.now_us().saturating_sub(started);
        self.log.push(LogRecord::Eval(FrameEval {
            frame_id: frame.frame_id,
            t_ms: frame.t_ms,
            angles,
            states,
            resolved,
            event: event.clone(),
            latency_us,
        }));
        Ok(event)
    }

    /// Logs `UpstreamGap` records for ids in `from..to` no drop explains.
    fn log_gaps(&mut self, from: u64, to: u64) {
        let mut id = from;
        while id < to {
            match self.explained.iter().find(|&&(lo, hi)| lo <= id && id <= hi) {
                Some(&(_, hi)) => id = hi.saturating_add(1),
                None => {
                    let start = id;
                    while id + 1 < to && !self.explained.iter().any(|&(lo, hi)| lo <= id + 1 && id + 1 <= hi) {
                        id += 1;
                    }
                    self.log.push(LogRecord::Drop(DropRecord {
                        through_frame_id: (id > start).then_some(id),
                        ..DropRecord::new(DropReason::UpstreamGap, Some(start), "frame ids skipped")
                    }));
                    id += 1;
                }
            }
        }
        self.explained.retain(|&(_, hi)| hi >= to);
    }
}

fn plan_for(index: usize, c: &Constraint) -> Plan {
    let sides = match c.side {
        Some(side) => alloc::vec![side],
        None => Side::BOTH.to_vec(),
    };
    let sides = sides
        .into_iter()
        .map(|side| SidePlan {
            side,
            joint: resolve_joint(&c.joint, c.axis.as_deref(), side),
            tracked: BodyPart::parse(&c.joint).map(|p| LandmarkName::of(side, p)),
            angles: VecDeque::new(),
            positions: VecDeque::new(),
        })
        .collect();
    Plan {
        index,
        sides,
        relation: c
            .spatial_rel
            .as_deref()
            .and_then(|r| SpatialRelation::parse(r).ok()),
    }
}

fn evaluate(
    plan: &mut Plan,
    c: &Constraint,
    frame: &PoseFrame,
    length: Option<f64>,
    kin: &KinematicsConfig,
    fb: &FeedbackConfig,
    snapshot: &mut PoseSnapshot,
) -> Outcome {
    let t = frame.t_ms;
    let angular = c.axis.is_some();
    let mut states = Vec::with_capacity(3);
    let mut theta: Option<f64> = None;
    let mut top_speed: Option<VelocitySample> = None;

    for sp in &mut plan.sides {
        if let Some(def) = sp.joint.filter(|_| c.has_angle_limit() || angular) {
            trim(&mut sp.angles, t, kin.velocity_window_ms);
            if let Ok(sample) = measure_joint(frame, &def, kin.visibility_floor) {
                sp.angles.push_back((t, sample.theta_deg));
                theta = Some(theta.map_or(sample.theta_deg, |m| m.max(sample.theta_deg)));
                snapshot.angles.push(JointAngleSample {
                    axis: c.axis.clone(),
                    ..sample
                });
            }
        }
        if c.max_velocity.is_none() {
            continue;
        }
        let speed = if angular {
            let history = sp.angles.make_contiguous();
            match angular_velocity(history, kin.velocity_window_ms, kin.ema_alpha) {
                Ok(omega) if history.last().is_some_and(|&(ht, _)| ht == t) => Some((omega, 0.0)),
                _ => None,
            }
        } else {
            let Some(name) = sp.tracked else { continue };
            trim(&mut sp.positions, t, kin.velocity_window_ms);
            if let Some(lm) = frame.get(name).filter(|l| l.visibility >= kin.visibility_floor) {
                sp.positions.push_back((t, lm.position()));
            }
            let history = sp.positions.make_contiguous();
            match (landmark_speed(history, kin.velocity_window_ms, kin.ema_alpha), length) {
                (Ok(v), Some(len)) if history.last().is_some_and(|&(ht, _)| ht == t) => {
                    Some((0.0, v / len))
                }
                _ => None,
            }
        };
        if let Some((omega, v_norm)) = speed {
            let sample = VelocitySample {
                joint: sp
                    .joint
                    .map(|d| d.vertex)
                    .or(sp.tracked)
                    .unwrap_or(LandmarkName::of(sp.side, BodyPart::Hip)),
                omega_deg_s: omega,
                v_norm,
                t_ms: t,
            };
            snapshot.velocities.push(sample);
            let magnitude = |s: &VelocitySample| s.omega_deg_s.abs().max(s.v_norm.abs());
            if top_speed.is_none_or(|best| magnitude(&sample) > magnitude(&best)) {
                top_speed = Some(sample);
            }
        }
    }

    if c.has_angle_limit() {
        match theta {
            Some(th) => states.push(classify_angle(th, c, fb).unwrap_or(KinematicState::NoData)),
            None => states.push(KinematicState::NoData),
        }
    }
    if c.max_velocity.is_some() {
        match top_speed {
            Some(v) => {
                if let Some(s) = classify_velocity(&v, c) {
                    states.push(s);
                } else if !c.has_angle_limit() && plan.relation.is_none() {
                    states.push(KinematicState::Optimal);
                }
            }
            None if !c.has_angle_limit() && plan.relation.is_none() => {
                states.push(KinematicState::NoData)
            }
            None => {}
        }
    }
    if let Some(rel) = plan.relation {
        let evals: Vec<_> = plan
            .sides
            .iter()
            .map(|sp| eval_spatial_relation(frame, rel, sp.side, kin.visibility_floor))
            .collect();
        if evals.iter().any(|e| matches!(e, Ok(s) if !s.satisfied)) {
            states.push(KinematicState::SpatialViolation);
        } else if evals.iter().any(Result::is_ok) {
            if !c.has_angle_limit() {
                states.push(KinematicState::Optimal);
            }
        } else {
            states.push(KinematicState::NoData);
        }
    }
    Outcome {
        state: resolve(states),
        theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{ClinicalNote, ConstraintSet, Urgency};
    use crate::kinematics::Landmark;
    use crate::trajectory::{commanded_angle, PoseGenerator, TrajectorySpec};
    use alloc::vec;
    use core::cell::Cell;

    fn shoulder_set() -> ConstraintSet {
        let mut c = Constraint::new("shoulder");
        c.axis = Some("abduction".into());
        c.max_angle = Some(90.0);
        c.urgency = Urgency::High;
        ConstraintSet {
            source_note_id: "n1".into(),
            constraints: vec![c.with_id()],
            residual_text: vec![],
        }
    }

    fn session(set: ConstraintSet) -> Session {
        Session::new(
            PatientState::new(ClinicalNote::new("n1", ""), set),
            SessionConfig::default(),
        )
        .unwrap()
    }

    fn generator(peak: f64, reps: u32) -> PoseGenerator {
        PoseGenerator::new(TrajectorySpec::shoulder_abduction(peak, reps)).unwrap()
    }

    #[test]
    fn refuses_empty_constraints() {
        let err = Session::new(
            PatientState::new(ClinicalNote::new("n", ""), ConstraintSet::new("n")),
            SessionConfig::default(),
        );
        assert!(matches!(err, Err(SessionError::NoConstraints)));
    }

    #[test]
    fn first_frame_over_limit_is_critical() {
        let mut s = session(shoulder_set());
        let mut g = generator(90.0, 1);
        let frame = g.frame_at_angle(0, 0, 96.0);
        let e = s.step(&frame).unwrap().unwrap();
        assert_eq!(e.state, KinematicState::CriticalViolation);
        assert_eq!(e.message, "Warning: Arm is too high. Lower to avoid strain.");
        assert_eq!(e.violated_constraint_id.as_deref(), Some("shoulder.abduction"));
        assert!((e.theta_deg.unwrap() - 96.0).abs() < 1e-6);
        assert_eq!(s.state().feedback.as_ref().unwrap().frame_id, 0);
    }

    #[test]
    fn missing_landmark_is_no_data() {
        let mut s = session(shoulder_set());
        let frame = PoseFrame::new(
            0,
            0,
            [Landmark::new(LandmarkName::LeftHip, 0.5, 0.7, 0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(s.step(&frame), Ok(None));
        let eval = s.log().evals().next().unwrap();
        assert_eq!(eval.resolved, KinematicState::NoData);
    }

    #[test]
    fn stale_frames_are_dropped_and_logged() {
        let mut s = session(shoulder_set());
        let mut g = generator(90.0, 1);
        s.step(&g.frame_at_angle(5, 100, 10.0)).unwrap();
        let err = s.step(&g.frame_at_angle(6, 100, 10.0)).unwrap_err();
        assert!(matches!(err, StepError::StaleFrame { frame_id: 6, .. }));
        assert!(s.step(&g.frame_at_angle(4, 200, 10.0)).is_err());
        let drops: Vec<_> = s.log().drops().map(|d| d.reason).collect();
        assert_eq!(drops, [DropReason::Stale, DropReason::Stale]);
        assert_eq!(s.log().evals().count(), 1);
    }

    #[test]
    fn gaps_are_explained() {
        let mut s = session(shoulder_set());
        let mut g = generator(90.0, 1);
        s.step(&g.frame_at_angle(0, 0, 10.0)).unwrap();
        s.record_drop(DropRecord::new(DropReason::Backpressure, Some(2), ""));
        s.step(&g.frame_at_angle(5, 200, 10.0)).unwrap();
        let gaps: Vec<_> = s
            .log()
            .drops()
            .filter(|d| d.reason == DropReason::UpstreamGap)
            .map(DropRecord::range)
            .collect();
        assert_eq!(gaps, [Some((1, 1)), Some((3, 4))]);
        assert_eq!(s.log().check_integrity(), Ok(()));
    }

    /// Scripted oracle: classify the analytic angle of every frame, keep
    /// non-silent runs long enough to pass the stability gate, collapse
    /// repeats.
    fn oracle(peak: f64, reps: u32) -> Vec<KinematicState> {
        let spec = TrajectorySpec::shoulder_abduction(peak, reps);
        let cfg = FeedbackConfig::default();
        let c = &shoulder_set().constraints[0];
        let states: Vec<_> = (0..spec.frame_count())
            .map(|i| classify_angle(commanded_angle(&spec, spec.t_ms(i)), c, &cfg).unwrap())
            .collect();
        let mut out: Vec<KinematicState> = Vec::new();
        for run in states.chunk_by(|a, b| a == b) {
            let s = run[0];
            let long_enough = s == KinematicState::CriticalViolation || run.len() >= 3;
            if !s.is_silent() && long_enough && out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    fn engine(peak: f64, reps: u32) -> Vec<KinematicState> {
        let mut s = session(shoulder_set());
        let mut out: Vec<KinematicState> = Vec::new();
        for frame in generator(peak, reps) {
            if let Some(e) = s.step(&frame).unwrap() {
                if out.last() != Some(&e.state) {
                    out.push(e.state);
                }
            }
        }
        out
    }

    #[test]
    fn sinusoid_matches_oracle() {
        use KinematicState::*;
        for peak in [60.0, 90.0, 100.0] {
            assert_eq!(engine(peak, 3), oracle(peak, 3), "peak {peak}");
        }
        assert_eq!(engine(60.0, 3), [UnderExtension]);
        assert_eq!(
            engine(90.0, 1),
            [UnderExtension, Optimal, UnderExtension]
        );
        assert_eq!(
            engine(100.0, 2).iter().filter(|&&s| s == CriticalViolation).count(),
            2
        );
    }

    #[test]
    fn dwell_matches_analytic_occupancy() {
        let spec = TrajectorySpec::shoulder_abduction(90.0, 1);
        let mut s = session(shoulder_set());
        for frame in PoseGenerator::new(spec).unwrap() {
            s.step(&frame).unwrap();
        }
        let summary = s.summarize().unwrap();
        // fraction of the period with theta >= 80: (1 - cos x) / 2 >= 8/9
        let x0 = libm::acos(1.0 - 2.0 * 80.0 / 90.0);
        let analytic = (2.0 * core::f64::consts::PI - 2.0 * x0) / (2.0 * core::f64::consts::PI);
        let frame = 1.0 / spec.frame_count() as f64;
        assert!((summary.dwell[&KinematicState::Optimal] - analytic).abs() <= frame + 1e-9);
        assert_eq!(summary.critical_violations, 0);
    }

    #[test]
    fn knee_spatial_and_velocity() {
        let mut knee = Constraint::new("knee");
        knee.spatial_rel = Some("behind_toe".into());
        knee.max_velocity = Some(0.5);
        let mut s = session(ConstraintSet {
            source_note_id: "n2".into(),
            constraints: vec![knee.with_id()],
            residual_text: vec![],
        });
        let mut g = generator(90.0, 1);
        // neutral stance: knee behind toe, not moving
        for i in 0..3 {
            s.step(&g.frame_at_angle(i, i * 33, 0.0)).unwrap();
        }
        let last = s.log().evals().last().unwrap();
        assert_eq!(last.resolved, KinematicState::Optimal);
        // knee pushed forward (toward the camera, -z) past the toes and held
        let mut event = None;
        for i in 3..6u64 {
            let mut lms: Vec<_> = g.frame_at_angle(i, i * 33, 0.0).landmarks().copied().collect();
            for lm in &mut lms {
                if lm.name == LandmarkName::LeftKnee {
                    lm.z = -0.3;
                }
            }
            let frame = PoseFrame::new(i, i * 33, lms).unwrap();
            event = s.step(&frame).unwrap();
            assert_eq!(event.is_some(), i == 5, "frame {i}");
        }
        let e = event.unwrap();
        assert_eq!(e.state, KinematicState::SpatialViolation);
        assert_eq!(e.message, "Keep your knee behind your toes.");
        assert_eq!(e.severity, crate::feedback::Severity::Stop);
        assert_eq!(s.log().evals().last().unwrap().states["knee.behind_toe"], KinematicState::SpatialViolation);
    }

    #[test]
    fn fast_arm_is_high_velocity() {
        let mut set = shoulder_set();
        set.constraints[0].max_velocity = Some(60.0);
        let mut s = session(set);
        let mut g = generator(90.0, 1);
        let mut states = Vec::new();
        for i in 0..6u64 {
            // 3 degrees per 33 ms ~ 90 deg/s, well under the angle limit
            let f = g.frame_at_angle(i, i * 33, 30.0 + 3.0 * i as f64);
            s.step(&f).unwrap();
            states.push(s.log().evals().last().unwrap().resolved);
        }
        assert_eq!(states[0], KinematicState::UnderExtension);
        assert!(states[2..].iter().all(|&st| st == KinematicState::HighVelocity));
    }

    struct Ticking(Cell<u64>);

    impl Clock for Ticking {
        fn now_us(&self) -> u64 {
            let t = self.0.get();
            self.0.set(t + 7);
            t
        }
    }

    #[test]
    fn latency_comes_from_the_clock() {
        let state = PatientState::new(ClinicalNote::new("n", ""), shoulder_set());
        let mut s = Session::with_clock(state, SessionConfig::default(), Ticking(Cell::new(0))).unwrap();
        for f in generator(90.0, 1).take(3) {
            s.step(&f).unwrap();
        }
        assert!(s.log().evals().all(|e| e.latency_us == 7));
    }
}

//! Latency benchmark: a producer thread emits synthetic frames on a fixed
//! schedule into the same drop-oldest mailbox the server uses, and the
//! session consumes them on the calling thread.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rehabloop_core::constraints::ClinicalNote;
use rehabloop_core::kinematics::{JointDef, Side};
use rehabloop_core::session::{LatencyStats, Session, SessionConfig, SessionError};
use rehabloop_core::trajectory::{commanded_angle, PoseGenerator, TrajectorySpec, TrajectoryError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Inbound, Ingest};
use crate::mailbox::Mailbox;
use crate::providers::MonotonicClock;
use rehabloop_core::constraints::parse_note;
use rehabloop_core::session::PatientState;

pub const BENCH_NOTE: &str = "Max 90 deg shoulder abduction.";

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub fps: f64,
    pub duration: Duration,
    pub peak_angle_deg: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub mailbox_capacity: usize,
    /// Extra time the consumer spends per frame, standing in for a slower
    /// host or a heavier pipeline.
    pub consumer_delay: Duration,
    pub session: SessionConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            fps: 30.0,
            duration: Duration::from_secs(60),
            peak_angle_deg: 100.0,
            noise_sigma: 0.002,
            seed: 7,
            mailbox_capacity: 64,
            consumer_delay: Duration::ZERO,
            session: SessionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub target_fps: f64,
    pub duration_s: f64,
    pub frames_sent: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    /// Processed frames over the wall time from first send to last evaluation.
    pub achieved_fps: f64,
    /// Engine time per evaluated frame.
    pub latency: LatencyStats,
    pub events_emitted: u64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("fps must be positive and finite, got {0}")]
    Fps(f64),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

pub fn run(opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    if !(opts.fps > 0.0 && opts.fps.is_finite()) {
        return Err(BenchError::Fps(opts.fps));
    }
    let frames = (opts.duration.as_secs_f64() * opts.fps).floor() as u64;
    let empty = BenchReport {
        target_fps: opts.fps,
        duration_s: opts.duration.as_secs_f64(),
        frames_sent: 0,
        frames_processed: 0,
        frames_dropped: 0,
        achieved_fps: 0.0,
        latency: LatencyStats::default(),
        events_emitted: 0,
    };
    if frames == 0 {
        return Ok(empty);
    }
    let spec = TrajectorySpec {
        joint: JointDef::shoulder_abduction(Side::Left),
        peak_angle_deg: opts.peak_angle_deg,
        period_ms: 4000,
        repetitions: 1,
        fps: opts.fps,
        noise_sigma: opts.noise_sigma,
        seed: opts.seed,
    };
    let mut generator = PoseGenerator::new(spec)?;
    let note = ClinicalNote::new("bench", BENCH_NOTE);
    let constraints = parse_note(&note).expect("bundled bench note parses");
    let state = PatientState::new(note, constraints);
    let mut ingest = Ingest::new(Session::with_clock(state, opts.session, MonotonicClock::new())?);

    let mailbox = Arc::new(Mailbox::new(opts.mailbox_capacity));
    let started = Instant::now();
    let producer = {
        let mailbox = Arc::clone(&mailbox);
        let fps = opts.fps;
        thread::spawn(move || {
            for i in 0..frames {
                let due = started + Duration::from_secs_f64(i as f64 / fps);
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
                let t_ms = spec.t_ms(i);
                let frame = generator.frame_at_angle(i, t_ms, commanded_angle(&spec, t_ms));
                mailbox.push(Inbound::Frame(frame));
            }
            mailbox.close();
        })
    };

    loop {
        let delivery = mailbox.take(Duration::from_millis(100));
        for old in delivery.displaced {
            if let Inbound::Frame(frame) = old {
                ingest.backpressure(&frame);
            }
        }
        if let Some(item) = delivery.item {
            let _ = ingest.apply(item);
            if !opts.consumer_delay.is_zero() {
                thread::sleep(opts.consumer_delay);
            }
        }
        if delivery.finished {
            break;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    producer.join().expect("producer thread");

    let summary = ingest.session().summarize().ok();
    let processed = summary.as_ref().map_or(0, |s| s.frames_processed);
    Ok(BenchReport {
        frames_sent: frames,
        frames_processed: processed,
        frames_dropped: summary.as_ref().map_or(0, |s| s.frames_dropped),
        achieved_fps: processed as f64 / elapsed,
        latency: summary.as_ref().map(|s| s.latency).unwrap_or_default(),
        events_emitted: summary.as_ref().map_or(0, |s| s.events_emitted),
        ..empty
    })
}

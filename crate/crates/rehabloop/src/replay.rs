//! Re-running a recorded session file through a fresh session.
//!
//! The file is any newline-delimited record stream: `frame` lines are
//! replayed, an `open` line supplies the constraints, and every other record
//! type is skipped. Server log files and client recordings both qualify.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use rehabloop_core::feedback::FeedbackEvent;
use rehabloop_core::session::{Session, SessionConfig, SessionError, SessionLog, SessionSummary, SummaryError};
use rehabloop_core::synthesis::{MockSynthesis, PromptTemplate};
use thiserror::Error;

use crate::ingest::{open_config, open_state, session_error, Ingest};
use crate::protocol::{decode_frame, record_type, ErrorRecord, OpenRecord, Record};
use crate::providers::EngineClock;

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Playback rate relative to the recorded timestamps; 0 replays as fast
    /// as possible.
    pub speed: f64,
    /// Replaces the recording's own `open` record.
    pub open: Option<OpenRecord>,
    pub session: SessionConfig,
    /// Record zero latency so summaries are reproducible byte for byte.
    pub logical_clock: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            speed: 0.0,
            open: None,
            session: SessionConfig::default(),
            logical_clock: false,
        }
    }
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub session_id: String,
    pub events: Vec<FeedbackEvent>,
    pub summary: SessionSummary,
    pub log: SessionLog,
    pub warnings: Vec<String>,
    pub wall_time: Duration,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("speed must be finite and non-negative, got {0}")]
    InvalidSpeed(f64),
    #[error("recording has no open record and no constraints were supplied")]
    NoOpenRecord,
    #[error("cannot open session: {}: {}", .0.code, .0.detail)]
    Open(ErrorRecord),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("recording contains no replayable frames")]
    Empty(#[from] SummaryError),
}

pub fn replay_file(path: &Path, opts: &ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    let bytes = fs::read(path).map_err(|source| ReplayError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    replay_bytes(&bytes, opts)
}

pub fn replay_bytes(bytes: &[u8], opts: &ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    if !(opts.speed >= 0.0 && opts.speed.is_finite()) {
        return Err(ReplayError::InvalidSpeed(opts.speed));
    }
    let mut warnings = Vec::new();
    let mut recorded_open = None;
    let mut frames = Vec::new();
    let lines: Vec<&[u8]> = bytes.split_inclusive(|&b| b == b'\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let number = i + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let truncated = i + 1 == lines.len() && !line.ends_with(b"\n");
        let outcome = match record_type(line).as_deref() {
            Some("frame") => decode_frame(line).map(|f| frames.push(f)).map_err(|e| e.to_string()),
            Some("open") if recorded_open.is_none() => match Record::parse(line) {
                Ok(Record::Open(open)) => {
                    recorded_open = Some(open);
                    Ok(())
                }
                Ok(_) => unreachable!("tagged open"),
                Err(e) => Err(e.to_string()),
            },
            Some(_) => Ok(()),
            None => Err("not a typed JSON record".to_string()),
        };
        match outcome {
            Ok(()) => {}
            Err(detail) if truncated => {
                let w = format!("line {number}: truncated record ignored ({detail})");
                log::warn!("{w}");
                warnings.push(w);
            }
            Err(detail) => return Err(ReplayError::MalformedRecord { line: number, detail }),
        }
    }

    let open = opts.open.clone().or(recorded_open).ok_or(ReplayError::NoOpenRecord)?;
    let state = open_state(&open, "replay", &MockSynthesis, &PromptTemplate::bundled())
        .map_err(ReplayError::Open)?;
    let session = Session::with_clock(state, open_config(&open, opts.session), EngineClock::new(opts.logical_clock))
        .map_err(|e| match e {
            SessionError::Config(_) => ReplayError::Open(session_error(&e)),
            other => ReplayError::Session(other),
        })?;
    let mut ingest = Ingest::new(session);
    let mut events = Vec::new();
    let started = Instant::now();
    let t0 = frames.first().map_or(0, |f| f.t_ms);
    for frame in &frames {
        if opts.speed > 0.0 {
            let due = started + Duration::from_secs_f64(frame.t_ms.saturating_sub(t0) as f64 / 1000.0 / opts.speed);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        match ingest.step(frame) {
            Ok(Some(e)) => events.push(e),
            Ok(None) => {}
            Err(e) => {
                let w = format!("frame {}: {}", frame.frame_id, e.detail);
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    let wall_time = started.elapsed();
    let session = ingest.into_session();
    let summary = session.summarize()?;
    let session_id = session.state().session_id.clone();
    let (_, log) = session.into_parts();
    Ok(ReplayOutcome {
        session_id,
        events,
        summary,
        log,
        warnings,
        wall_time,
    })
}

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{FeedbackEvent, KinematicState};

/// Evaluation of one processed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_id: u64,
    pub t_ms: u64,
    /// Measured angle per constraint id, where one was measurable.
    pub angles: BTreeMap<String, f64>,
    pub states: BTreeMap<String, KinematicState>,
    pub resolved: KinematicState,
    #[serde(default)]
    pub event: Option<FeedbackEvent>,
    pub latency_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Stale,
    Backpressure,
    Malformed,
    UpstreamGap,
}

/// A frame (or an inclusive range of frames) that was never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub through_frame_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<u64>,
    pub reason: DropReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl DropRecord {
    pub fn new(reason: DropReason, frame_id: Option<u64>, detail: impl Into<String>) -> Self {
        DropRecord {
            frame_id,
            through_frame_id: None,
            t_ms: None,
            reason,
            detail: detail.into(),
        }
    }

    /// Inclusive id range covered, if the record names one.
    pub fn range(&self) -> Option<(u64, u64)> {
        let lo = self.frame_id?;
        Some((lo, self.through_frame_id.unwrap_or(lo).max(lo)))
    }

    /// Number of frames the record accounts for.
    pub fn frame_count(&self) -> u64 {
        self.range().map_or(1, |(lo, hi)| hi - lo + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Eval(FrameEval),
    Drop(DropRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("frame {current} evaluated after frame {previous}")]
    NotIncreasing { previous: u64, current: u64 },
    #[error("frames {from}..={to} missing without a drop record")]
    UnexplainedGap { from: u64, to: u64 },
}

/// Append-only record of a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn evals(&self) -> impl Iterator<Item = &FrameEval> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Eval(e) => Some(e),
            LogRecord::Drop(_) => None,
        })
    }

    pub fn drops(&self) -> impl Iterator<Item = &DropRecord> + '_ {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Drop(d) => Some(d),
            LogRecord::Eval(_) => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &FeedbackEvent> + '_ {
        self.evals().filter_map(|e| e.event.as_ref())
    }

    /// Evaluated frame ids strictly increase, and every id skipped between
    /// two evaluations is covered by some drop record.
    pub fn check_integrity(&self) -> Result<(), IntegrityError> {
        let covered: Vec<(u64, u64)> = self.drops().filter_map(DropRecord::range).collect();
        let is_covered = |id: u64| covered.iter().any(|&(lo, hi)| lo <= id && id <= hi);
        let mut previous: Option<u64> = None;
        for e in self.evals() {
            if let Some(p) = previous {
                if e.frame_id <= p {
                    return Err(IntegrityError::NotIncreasing {
                        previous: p,
                        current: e.frame_id,
                    });
                }
                let mut id = p + 1;
                while id < e.frame_id {
                    if !is_covered(id) {
                        let from = id;
                        while id + 1 < e.frame_id && !is_covered(id + 1) {
                            id += 1;
                        }
                        return Err(IntegrityError::UnexplainedGap { from, to: id });
                    }
                    id += 1;
                }
            }
            previous = Some(e.frame_id);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p95_us: u64,
    pub max_us: u64,
}

impl LatencyStats {
    /// Mean, nearest-rank 95th percentile and maximum.
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let rank = (95 * n).div_ceil(100).max(1);
        LatencyStats {
            mean_us: sorted.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
            p95_us: sorted[rank - 1],
            max_us: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub duration_ms: u64,
    pub frames_processed: u64,
    /// Fraction of processed frames per resolved state; all states present.
    pub dwell: BTreeMap<KinematicState, f64>,
    /// Maximal runs of consecutive critical frames.
    pub critical_violations: u64,
    pub events_emitted: u64,
    pub latency: LatencyStats,
    pub frames_dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("session log has no evaluated frames")]
    EmptyLog,
}

pub fn summarize(log: &SessionLog) -> Result<SessionSummary, SummaryError> {
    let evals: Vec<&FrameEval> = log.evals().collect();
    let (first, last) = match (evals.first(), evals.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(SummaryError::EmptyLog),
    };
    let n = evals.len() as u64;
    let mut counts = [0u64; 7];
    let mut episodes = 0;
    let mut in_critical = false;
    for e in &evals {
        counts[e.resolved.index()] += 1;
        let critical = e.resolved == KinematicState::CriticalViolation;
        if critical && !in_critical {
            episodes += 1;
        }
        in_critical = critical;
    }
    let dwell = KinematicState::ALL
        .into_iter()
        .map(|s| (s, counts[s.index()] as f64 / n as f64))
        .collect();
    let latencies: Vec<u64> = evals.iter().map(|e| e.latency_us).collect();
    Ok(SessionSummary {
        duration_ms: last.t_ms.saturating_sub(first.t_ms),
        frames_processed: n,
        dwell,
        critical_violations: episodes,
        events_emitted: evals.iter().filter(|e| e.event.is_some()).count() as u64,
        latency: LatencyStats::from_samples(&latencies),
        frames_dropped: log.drops().map(DropRecord::frame_count).sum(),
    })
}

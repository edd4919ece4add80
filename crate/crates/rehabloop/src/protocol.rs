//! Newline-delimited JSON records shared by the socket protocol and log files.
//!
//! Every line is one JSON object with a `type` tag: `open`, `frame`,
//! `event`, `error` and `heartbeat` travel on the wire; log files add
//! `eval`, `drop` and `summary`.

use std::borrow::Cow;
use std::io::{self, Write};

use rehabloop_core::feedback::{FeedbackConfig, FeedbackEvent};
use rehabloop_core::kinematics::{FrameError, Landmark, LandmarkName, PoseFrame};
use rehabloop_core::session::{DropRecord, FrameEval, SessionSummary};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

/// Session handshake: a note to extract from, or a prebuilt constraint set
/// in the canonical schema. The server echoes it back with `session_id` and
/// `video_url` filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FeedbackConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub name: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default = "full_visibility")]
    pub visibility: f64,
}

fn full_visibility() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub t_ms: u64,
    pub landmarks: Vec<LandmarkRecord>,
}

impl From<&PoseFrame> for FrameRecord {
    fn from(frame: &PoseFrame) -> Self {
        FrameRecord {
            frame_id: frame.frame_id,
            t_ms: frame.t_ms,
            landmarks: frame
                .landmarks()
                .map(|l| LandmarkRecord {
                    name: l.name.as_str().into(),
                    x: l.x,
                    y: l.y,
                    z: l.z,
                    visibility: l.visibility,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
}

impl ErrorRecord {
    pub fn new(code: &str, detail: impl Into<String>) -> Self {
        ErrorRecord {
            code: code.into(),
            detail: detail.into(),
            frame_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Open(OpenRecord),
    Frame(FrameRecord),
    Event(FeedbackEvent),
    Error(ErrorRecord),
    Heartbeat,
    Eval(FrameEval),
    Drop(DropRecord),
    Summary(SessionSummary),
}

impl Record {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("records always serialize");
        line.push('\n');
        line
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(self.to_line().as_bytes())
    }

    pub fn parse(line: &[u8]) -> Result<Record, ProtocolError> {
        serde_json::from_slice(trim_line(line)).map_err(|e| malformed(line, &e))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed record at byte {offset}: {detail}")]
    MalformedRecord { offset: usize, detail: String },
    #[error("unknown landmark {name:?} at index {index}")]
    UnknownLandmark { index: usize, name: String },
    #[error("landmark {name} {field} = {value} outside its range")]
    RangeViolation {
        name: String,
        field: &'static str,
        value: f64,
    },
}

impl ProtocolError {
    /// Stable identifier used in `error` records.
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::MalformedRecord { .. } => "malformed_record",
            ProtocolError::UnknownLandmark { .. } => "unknown_landmark",
            ProtocolError::RangeViolation { .. } => "range_violation",
        }
    }
}

fn trim_line(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

/// Byte offset of a serde_json error position within `text`.
fn offset_of(text: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match text[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => break,
        }
    }
    (offset + column.saturating_sub(1)).min(text.len())
}

fn malformed(text: &[u8], e: &serde_json::Error) -> ProtocolError {
    ProtocolError::MalformedRecord {
        offset: offset_of(text, e.line(), e.column()),
        detail: e.to_string(),
    }
}

#[derive(Deserialize)]
struct RawFrame<'a> {
    #[serde(rename = "type", borrow)]
    kind: Cow<'a, str>,
    frame_id: u64,
    t_ms: u64,
    #[serde(borrow)]
    landmarks: Vec<&'a RawValue>,
}

/// Decodes one `frame` line into a validated [`PoseFrame`].
///
/// Unknown fields are ignored; landmark names may be canonical or aliases
/// such as `left_acromion`. A repeated landmark is malformed, reported at
/// the offset of its second occurrence.
pub fn decode_frame(line: &[u8]) -> Result<PoseFrame, ProtocolError> {
    let body = trim_line(line);
    let text = std::str::from_utf8(body).map_err(|e| ProtocolError::MalformedRecord {
        offset: e.valid_up_to(),
        detail: "invalid UTF-8".into(),
    })?;
    let raw: RawFrame<'_> = serde_json::from_str(text).map_err(|e| malformed(body, &e))?;
    if raw.kind != "frame" {
        return Err(ProtocolError::MalformedRecord {
            offset: 0,
            detail: format!("expected a frame record, got {:?}", raw.kind),
        });
    }
    let base = text.as_ptr() as usize;
    let mut landmarks = Vec::with_capacity(raw.landmarks.len());
    for (index, value) in raw.landmarks.iter().enumerate() {
        let offset = value.get().as_ptr() as usize - base;
        let rec: LandmarkRecord =
            serde_json::from_str(value.get()).map_err(|e| ProtocolError::MalformedRecord {
                offset: offset + offset_of(value.get().as_bytes(), e.line(), e.column()),
                detail: format!("landmark {index}: {e}"),
            })?;
        let name = LandmarkName::parse(&rec.name).ok_or_else(|| ProtocolError::UnknownLandmark {
            index,
            name: rec.name.clone(),
        })?;
        landmarks.push((offset, Landmark::new(name, rec.x, rec.y, rec.z, rec.visibility)));
    }
    PoseFrame::new(raw.frame_id, raw.t_ms, landmarks.iter().map(|(_, l)| *l)).map_err(|e| match e {
        FrameError::DuplicateLandmark(name) => {
            let second = landmarks
                .iter()
                .filter(|(_, l)| l.name == name)
                .nth(1)
                .map_or(0, |(o, _)| *o);
            ProtocolError::MalformedRecord {
                offset: second,
                detail: format!("duplicate landmark {name}"),
            }
        }
        FrameError::OutOfRange { name, field, value } => ProtocolError::RangeViolation {
            name: name.as_str().into(),
            field,
            value,
        },
        FrameError::NonFinite { name, field } => ProtocolError::RangeViolation {
            name: name.as_str().into(),
            field,
            value: f64::NAN,
        },
    })
}

/// The `frame` line for `frame`, newline included.
pub fn encode_frame(frame: &PoseFrame) -> String {
    Record::Frame(FrameRecord::from(frame)).to_line()
}

/// Best-effort `frame_id` from a line that failed to decode.
pub fn probe_frame_id(line: &[u8]) -> Option<u64> {
    #[derive(Deserialize)]
    struct Probe {
        frame_id: Option<u64>,
    }
    serde_json::from_slice::<Probe>(trim_line(line))
        .ok()
        .and_then(|p| p.frame_id)
}

/// Value of the `type` tag, if the line is a JSON object that has one.
pub fn record_type(line: &[u8]) -> Option<String> {
    #[derive(Deserialize)]
    struct Probe {
        #[serde(rename = "type")]
        kind: String,
    }
    serde_json::from_slice::<Probe>(trim_line(line))
        .ok()
        .map(|p| p.kind)
}

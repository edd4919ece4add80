#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rehabloop::protocol::encode_frame;
use rehabloop_core::trajectory::{PoseGenerator, TrajectorySpec};

pub const REFERENCE_NOTE_1: &str =
    "Patient recovering from rotator cuff tear. Max 90 deg shoulder abduction.";
pub const REFERENCE_NOTE_2: &str = "Ensure knee does not track past the toes during squats. Go slow.";

/// Band of `theta` for a max-only limit, straight from the threshold table.
pub fn oracle_band(theta: f64, max: f64) -> &'static str {
    if theta > max + 5.0 {
        "CriticalViolation"
    } else if theta >= max - 10.0 {
        "Optimal"
    } else if theta >= max - 15.0 {
        "Approaching"
    } else {
        "UnderExtension"
    }
}

/// Emission schedule for a per-frame state trace: a state is announced
/// after three consecutive frames, at most once per second per state;
/// critical frames are always announced; Approaching never is.
pub fn oracle_debounce(trace: &[(u64, u64, &'static str)]) -> Vec<(u64, &'static str)> {
    let mut out = Vec::new();
    let mut run: Option<(&str, u32)> = None;
    let mut last: Vec<(&str, u64)> = Vec::new();
    for &(frame, t, state) in trace {
        let len = match run {
            Some((s, n)) if s == state => n + 1,
            _ => 1,
        };
        run = Some((state, len));
        if state == "Approaching" {
            continue;
        }
        let previous = last.iter().find(|(s, _)| *s == state).map(|&(_, t)| t);
        let spaced = previous.is_none_or(|p| t - p >= 1000);
        if state == "CriticalViolation" || (len >= 3 && spaced) {
            last.retain(|(s, _)| *s != state);
            last.push((state, t));
            out.push((frame, state));
        }
    }
    out
}

/// Valid frame lines for a noisy shoulder abduction to `peak`.
pub fn frame_lines(peak: f64, reps: u32, noise: f64, seed: u64) -> Vec<String> {
    let spec = TrajectorySpec {
        noise_sigma: noise,
        seed,
        ..TrajectorySpec::shoulder_abduction(peak, reps)
    };
    PoseGenerator::new(spec).unwrap().map(|f| encode_frame(&f)).collect()
}

pub const MUTATIONS: usize = 14;

/// Deterministic corpus of damaged frame lines. Frame ids increase with
/// the index, so undamaged lines would be accepted in order.
pub fn fuzz_lines(n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generator = PoseGenerator::new(TrajectorySpec {
        noise_sigma: 0.01,
        seed,
        ..TrajectorySpec::shoulder_abduction(100.0, 1)
    })
    .unwrap();
    (0..n)
        .map(|i| {
            let id = i as u64 + 1;
            let frame = generator.frame_at_angle(id, id * 33, rng.random_range(0.0..120.0));
            let line = encode_frame(&frame);
            mutate(&mut rng, line, i % MUTATIONS)
        })
        .collect()
}

fn mutate(rng: &mut ChaCha8Rng, line: String, kind: usize) -> Vec<u8> {
    let mut v: serde_json::Value = serde_json::from_str(&line).unwrap();
    let lms = v["landmarks"].as_array().unwrap().len();
    let pick = rng.random_range(0..lms);
    let with = |v: serde_json::Value| {
        let mut s = serde_json::to_string(&v).unwrap();
        s.push('\n');
        s.into_bytes()
    };
    match kind {
        0 => {
            let n = rng.random_range(1..=lms);
            let arr = v["landmarks"].as_array_mut().unwrap();
            for _ in 0..n {
                let k = rng.random_range(0..arr.len());
                arr.remove(k);
            }
            with(v)
        }
        1 => {
            let arr = v["landmarks"].as_array_mut().unwrap();
            let dup = arr[pick].clone();
            arr.push(dup);
            with(v)
        }
        2 => {
            let field = ["x", "y", "z", "visibility"][rng.random_range(0..4)];
            let s = with(v);
            let s = String::from_utf8(s).unwrap();
            let key = format!("\"{field}\":");
            let at = s.match_indices(&key).nth(pick).map_or(0, |(p, _)| p + key.len());
            let end = at + s[at..].find([',', '}']).unwrap_or(0);
            format!("{}NaN{}", &s[..at], &s[end..]).into_bytes()
        }
        3 => {
            let field = if rng.random_bool(0.5) { "x" } else { "y" };
            let value = if rng.random_bool(0.5) { 1.5 } else { -0.25 };
            v["landmarks"][pick][field] = value.into();
            with(v)
        }
        4 => {
            v["landmarks"][pick]["name"] = "left_tail".into();
            with(v)
        }
        5 => {
            let mut b = line.into_bytes();
            let cut = rng.random_range(1..b.len() - 1);
            b.truncate(cut);
            b.push(b'\n');
            b
        }
        6 => {
            let mut b = line.into_bytes();
            for _ in 0..rng.random_range(1..4) {
                let k = rng.random_range(0..b.len() - 1);
                b[k] = rng.random();
            }
            b
        }
        7 => {
            v["t_ms"] = "soon".into();
            with(v)
        }
        8 => {
            v["landmarks"] = serde_json::json!([]);
            with(v)
        }
        9 => {
            let mut b = vec![0u8; rng.random_range(1..200)];
            rng.fill_bytes(&mut b);
            b.retain(|&c| c != b'\n');
            b.push(b'\n');
            b
        }
        10 => {
            v.as_object_mut().unwrap().remove("frame_id");
            with(v)
        }
        11 => {
            v["frame_id"] = 0.into();
            v["t_ms"] = 0.into();
            with(v)
        }
        12 => {
            v["landmarks"][pick]["visibility"] = 2.into();
            with(v)
        }
        _ => {
            v["landmarks"][pick]["x"] = serde_json::json!("0.5");
            with(v)
        }
    }
}

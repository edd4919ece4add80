//! Acceptance criteria, one test each. Every test prints a single
//! `[PASS]` or `[FAIL]` line with the measured value before asserting.
//! Run with `--nocapture` to see the lines.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::time::{Duration, Instant};

use rehabloop::bench::{self, BenchOptions};
use rehabloop::ingest::{open_state, Ingest};
use rehabloop::protocol::{encode_frame, OpenRecord, Record};
use rehabloop::replay::{replay_bytes, ReplayOptions};
use rehabloop::schema::to_schema_value;
use rehabloop::server::{spawn, ServerConfig};
use rehabloop::simulate::{simulate, SimulateOptions};
use rehabloop_core::constraints::{parse_note, ClinicalNote, Constraint, NoteParser};
use rehabloop_core::feedback::{classify_angle, resolve, FeedbackConfig, KinematicState, MessageTable};
use rehabloop_core::kinematics::{measure_joint, resolve_joint, Side};
use rehabloop_core::session::{DropReason, LogRecord, Session, SessionConfig};
use rehabloop_core::synthesis::{MockSynthesis, PromptTemplate};
use rehabloop_core::trajectory::{commanded_angle, PoseGenerator, TrajectorySpec};
use serde_json::{json, Value};

fn verdict(name: &str, pass: bool, detail: String) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn shoulder_limit() -> Constraint {
    parse_note(&ClinicalNote::new("a", common::REFERENCE_NOTE_1)).unwrap().constraints[0].clone()
}

#[test]
fn c1_reference_notes_extract_exactly() {
    let started = Instant::now();
    let one = to_schema_value(&parse_note(&ClinicalNote::new("n1", common::REFERENCE_NOTE_1)).unwrap());
    let two = to_schema_value(&parse_note(&ClinicalNote::new("n2", common::REFERENCE_NOTE_2)).unwrap());
    let elapsed = started.elapsed();
    let want_one = json!([{"constraint_id": "shoulder.abduction", "joint": "shoulder", "axis": "abduction", "max_angle": 90, "urgency": "high"}]);
    let want_two = json!([{"constraint_id": "knee.behind_toe", "joint": "knee", "spatial_rel": "behind_toe", "max_velocity": 0.5, "urgency": "normal"}]);
    let pass = one["constraints"] == want_one && two["constraints"] == want_two && elapsed < Duration::from_secs(1);
    verdict(
        "table notes",
        pass,
        format!("{} | {} in {:?}", one["constraints"], two["constraints"], elapsed),
    );
}

#[test]
fn c2_decision_matrix_sweep() {
    let c = shoulder_limit();
    let cfg = FeedbackConfig::default();
    let mut mismatches = Vec::new();
    let mut transitions = Vec::new();
    let mut seen = BTreeSet::new();
    let mut prev = None;
    for k in 0..=1800u32 {
        let theta = f64::from(k) / 10.0;
        let got = classify_angle(theta, &c, &cfg).unwrap();
        // integer tenths keep the oracle free of float edges
        let want = if k > 950 {
            KinematicState::CriticalViolation
        } else if k >= 800 {
            KinematicState::Optimal
        } else if k >= 750 {
            KinematicState::Approaching
        } else {
            KinematicState::UnderExtension
        };
        if got != want {
            mismatches.push(theta);
        }
        if prev.is_some_and(|p| p != got) {
            transitions.push(theta);
        }
        prev = Some(got);
        seen.insert(got);
    }
    let table = MessageTable::bundled();
    let label = c.joint_label();
    let msg = |s| table.render(s, &c.joint, &label, Some(100.0), Some(90.0));
    let messages = [
        (KinematicState::CriticalViolation, "Warning: Arm is too high. Lower to avoid strain."),
        (KinematicState::Optimal, "Perfect form. Hold this position."),
        (KinematicState::UnderExtension, "Raise your arm slightly higher if comfortable."),
        (KinematicState::HighVelocity, "Slow down your movement to maintain control."),
    ];
    let bad_messages: Vec<_> = messages.iter().filter(|(s, m)| msg(*s).as_deref() != Some(*m)).collect();
    let silent = msg(KinematicState::Approaching).is_none();
    let pass = mismatches.is_empty()
        && transitions == [75.0, 80.0, 95.1]
        && seen.len() == 4
        && bad_messages.is_empty()
        && silent;
    verdict(
        "decision matrix",
        pass,
        format!(
            "1801 angles, {} mismatches, transitions at {:?}, {} states, {} message mismatches",
            mismatches.len(),
            transitions,
            seen.len(),
            bad_messages.len()
        ),
    );
}

#[test]
fn c3_geometry_against_analytic_angles() {
    let pairs = [
        ("shoulder", Some("abduction")),
        ("shoulder", Some("flexion")),
        ("shoulder", None),
        ("elbow", Some("flexion")),
        ("hip", Some("abduction")),
        ("hip", Some("flexion")),
        ("knee", Some("flexion")),
    ];
    let mut worst: f64 = 0.0;
    for (joint, axis) in pairs {
        for side in [Side::Left, Side::Right] {
            let def = resolve_joint(joint, axis, side).unwrap();
            let spec = TrajectorySpec {
                joint: def,
                ..TrajectorySpec::shoulder_abduction(170.0, 1)
            };
            for frame in PoseGenerator::new(spec).unwrap() {
                let got = measure_joint(&frame, &def, 0.0).unwrap().theta_deg;
                worst = worst.max((got - commanded_angle(&spec, frame.t_ms)).abs());
            }
        }
    }

    let spec = TrajectorySpec {
        noise_sigma: 0.005,
        seed: 11,
        ..TrajectorySpec::shoulder_abduction(60.0, 1)
    };
    let def = spec.joint;
    let mut g = PoseGenerator::new(spec).unwrap();
    let mut errors: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let f = g.frame_at_angle(i, i * 33, 60.0);
            (measure_joint(&f, &def, 0.0).unwrap().theta_deg - 60.0).abs()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = (errors[4999] + errors[5000]) / 2.0;
    verdict(
        "geometry",
        worst <= 1e-6 && median <= 5.0,
        format!("noise-free max error {worst:.3e} deg, noisy median error {median:.3} deg"),
    );
}

#[test]
fn c4_sustained_throughput() {
    let report = bench::run(&BenchOptions::default()).unwrap();
    let pass = report.achieved_fps >= 30.0 && report.latency.p95_us <= 5000;
    verdict(
        "throughput",
        pass,
        format!(
            "{} frames in {} s, {:.2} FPS achieved, p95 {} us, {} dropped",
            report.frames_processed, report.duration_s, report.achieved_fps, report.latency.p95_us, report.frames_dropped
        ),
    );
}

fn server_recording() -> Vec<u8> {
    use std::io::{BufRead, BufReader, Write};
    use std::net::{Shutdown, TcpListener, TcpStream};

    let dir = tempfile::tempdir().unwrap();
    let srv = spawn(
        TcpListener::bind("127.0.0.1:0").unwrap(),
        ServerConfig {
            log_dir: Some(dir.path().into()),
            mailbox_capacity: 1 << 20,
            ..ServerConfig::default()
        },
    )
    .unwrap();
    let mut stream = TcpStream::connect(srv.local_addr()).unwrap();
    let open = Record::Open(OpenRecord {
        note: Some(common::REFERENCE_NOTE_1.into()),
        ..OpenRecord::default()
    });
    stream.write_all(open.to_line().as_bytes()).unwrap();
    for (i, l) in common::frame_lines(100.0, 3, 0.004, 5).iter().enumerate() {
        stream.write_all(l.as_bytes()).unwrap();
        if i % 97 == 13 {
            stream.write_all(b"{\"type\":\"frame\",\"frame_id\":true}\n").unwrap();
        }
    }
    stream.shutdown(Shutdown::Write).unwrap();
    for _ in BufReader::new(stream).lines().map_while(Result::ok) {}
    srv.shutdown().unwrap();
    let path = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    fs::read(path).unwrap()
}

fn event_log(events: &[rehabloop_core::feedback::FeedbackEvent]) -> Vec<u8> {
    events.iter().flat_map(|e| Record::Event(e.clone()).to_line().into_bytes()).collect()
}

#[test]
fn c5_replay_is_deterministic() {
    let mut recordings = vec![server_recording()];
    for (note, peak) in [(common::REFERENCE_NOTE_1, 60.0), (common::REFERENCE_NOTE_1, 100.0), ("Max 45 deg knee flexion.", 70.0)] {
        let mut text = Record::Open(OpenRecord {
            note: Some(note.into()),
            ..OpenRecord::default()
        })
        .to_line();
        let set = parse_note(&ClinicalNote::new("r", note)).unwrap();
        let c = &set.constraints[0];
        let spec = TrajectorySpec {
            joint: resolve_joint(&c.joint, c.axis.as_deref(), Side::Left).unwrap(),
            noise_sigma: 0.003,
            seed: 21,
            ..TrajectorySpec::shoulder_abduction(peak, 2)
        };
        for f in PoseGenerator::new(spec).unwrap() {
            text.push_str(&encode_frame(&f));
        }
        recordings.push(text.into_bytes());
    }
    let opts = ReplayOptions {
        speed: 0.0,
        logical_clock: true,
        ..ReplayOptions::default()
    };
    let mut differing = 0;
    let mut events = 0;
    for rec in &recordings {
        let a = replay_bytes(rec, &opts).unwrap();
        let b = replay_bytes(rec, &opts).unwrap();
        let wall = replay_bytes(rec, &ReplayOptions::default()).unwrap();
        let same = event_log(&a.events) == event_log(&b.events)
            && event_log(&a.events) == event_log(&wall.events)
            && serde_json::to_vec(&a.summary).unwrap() == serde_json::to_vec(&b.summary).unwrap();
        differing += usize::from(!same);
        events += a.events.len();
    }
    verdict(
        "replay determinism",
        differing == 0 && events > 0,
        format!("{} recordings, {events} events, {differing} differing", recordings.len()),
    );
}

fn state_name(s: KinematicState) -> &'static str {
    match s {
        KinematicState::CriticalViolation => "CriticalViolation",
        KinematicState::Optimal => "Optimal",
        KinematicState::Approaching => "Approaching",
        KinematicState::UnderExtension => "UnderExtension",
        _ => "other",
    }
}

#[test]
fn c6_scripted_sessions_match_oracle() {
    let mut report = Vec::new();
    let mut pass = true;
    for peak in [60.0, 90.0, 100.0] {
        let mut opts = SimulateOptions::new(ClinicalNote::new("s", common::REFERENCE_NOTE_1), peak);
        opts.logical_clock = true;
        let out = simulate(&opts).unwrap();
        let trace: Vec<(u64, u64, &'static str)> = PoseGenerator::new(out.spec)
            .unwrap()
            .map(|f| (f.frame_id, f.t_ms, common::oracle_band(commanded_angle(&out.spec, f.t_ms), 90.0)))
            .collect();
        let want = common::oracle_debounce(&trace);
        let got: Vec<(u64, &str)> = out.events.iter().map(|e| (e.frame_id, state_name(e.state))).collect();
        let aligned = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| g.1 == w.1 && g.0.abs_diff(w.0) <= 1);
        let criticals = out.summary.critical_violations;
        let shape = match peak as u32 {
            60 => got.iter().all(|g| g.1 == "UnderExtension") && !got.is_empty(),
            90 => criticals == 0,
            _ => (0..3u64).all(|rep| {
                out.events
                    .iter()
                    .any(|e| e.state == KinematicState::CriticalViolation && e.t_ms / 4000 == rep)
            }),
        };
        pass &= aligned && shape;
        report.push(format!(
            "peak {peak}: {} events vs {} expected, aligned {aligned}, critical episodes {criticals}",
            got.len(),
            want.len()
        ));
    }
    verdict("scripted oracle", pass, report.join("; "));
}

#[test]
fn c7_safety_dominance_and_accounting() {
    let started = Instant::now();
    let rank = |s: KinematicState| match s {
        KinematicState::CriticalViolation => 6,
        KinematicState::SpatialViolation => 5,
        KinematicState::HighVelocity => 4,
        KinematicState::UnderExtension => 3,
        KinematicState::Optimal => 2,
        KinematicState::Approaching => 1,
        _ => 0,
    };
    let all = KinematicState::ALL;
    let mut wrong = 0;
    for mask in 0u32..(1 << all.len()) {
        let subset: Vec<KinematicState> = (0..all.len()).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
        let got = resolve(subset.iter().copied());
        let want = subset.iter().copied().max_by_key(|&s| rank(s)).unwrap_or(KinematicState::NoData);
        let critical_wins = !subset.contains(&KinematicState::CriticalViolation) || got == KinematicState::CriticalViolation;
        wrong += usize::from(got != want || !critical_wins);
    }

    let open = OpenRecord {
        note: Some(common::REFERENCE_NOTE_1.into()),
        ..OpenRecord::default()
    };
    let state = open_state(&open, "fuzz", &MockSynthesis, &PromptTemplate::bundled()).unwrap();
    let mut ingest = Ingest::new(Session::new(state, SessionConfig::default()).unwrap());
    let lines = common::fuzz_lines(10_000, 1234);
    let mut unlogged = 0;
    for line in &lines {
        let before = ingest.session().log().len();
        let result = ingest.handle_line(line);
        let added: Vec<&LogRecord> = ingest.session().log().records()[before..]
            .iter()
            .filter(|r| !matches!(r, LogRecord::Drop(d) if d.reason == DropReason::UpstreamGap))
            .collect();
        let logged = match (added.as_slice(), &result) {
            ([LogRecord::Eval(_)], Ok(_)) => true,
            ([LogRecord::Drop(d)], Err(_)) => matches!(d.reason, DropReason::Malformed | DropReason::Stale),
            _ => false,
        };
        unlogged += usize::from(!logged);
    }
    let integrity = ingest.session().log().check_integrity().is_ok();
    let rejected = ingest.session().log().drops().filter(|d| d.reason != DropReason::UpstreamGap).count();
    let elapsed = started.elapsed();
    verdict(
        "safety dominance",
        wrong == 0 && unlogged == 0 && integrity && elapsed < Duration::from_secs(30),
        format!(
            "{} subsets, {wrong} wrong; {} fuzzed lines, {rejected} rejected, {unlogged} unlogged, integrity {integrity}; {elapsed:?}",
            1 << all.len(),
            lines.len()
        ),
    );
}

#[test]
fn c8_note_corpus() {
    let corpus: Value = serde_json::from_str(include_str!("../../core/data/corpus.v1.json")).unwrap();
    let notes = corpus["notes"].as_array().unwrap();
    let parser = NoteParser::default();
    let (mut exact, mut false_constraints) = (0, 0);
    for entry in notes {
        let set = parser
            .parse(&ClinicalNote::new(entry["id"].as_str().unwrap(), entry["text"].as_str().unwrap()))
            .unwrap();
        let got = to_schema_value(&set)["constraints"].as_array().unwrap().clone();
        let want = entry["expected"].as_array().unwrap();
        exact += usize::from(&got == want);
        false_constraints += got.iter().filter(|c| !want.contains(c)).count();
    }
    verdict(
        "note corpus",
        notes.len() == 40 && exact == notes.len() && false_constraints == 0,
        format!("{exact}/{} exact, {false_constraints} false constraints", notes.len()),
    );
}

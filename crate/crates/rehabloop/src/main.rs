use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rehabloop::bench::{self, BenchOptions, BenchReport};
use rehabloop::config::{self, FileConfig, Settings};
use rehabloop::protocol::{OpenRecord, Record};
use rehabloop::replay::{self, ReplayError, ReplayOptions};
use rehabloop::schema::{from_schema, to_schema, to_schema_pretty, to_schema_value};
use rehabloop::server::{self, ServerConfig};
use rehabloop::simulate::{self, SimulateError, SimulateOptions};
use rehabloop_core::constraints::{validate, ClinicalNote, NoteParser, ParseError};
use rehabloop_core::feedback::FeedbackEvent;
use rehabloop_core::kinematics::Side;
use rehabloop_core::session::{Phase1Error, SessionConfig, SessionSummary};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "rehabloop", version, about = "Constraint-aware exercise feedback engine")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    /// JSON config file with feedback and server settings.
    #[arg(long, global = true, env = config::ENV_CONFIG)]
    config: Option<PathBuf>,
    #[command(flatten)]
    feedback: FeedbackFlags,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    #[value(name = "line-json")]
    LineJson,
}

#[derive(Debug, Args)]
struct FeedbackFlags {
    /// Degrees above max_angle before a violation is critical.
    #[arg(long, global = true)]
    delta_deg: Option<f64>,
    #[arg(long, global = true)]
    optimal_band_deg: Option<f64>,
    #[arg(long, global = true)]
    under_band_deg: Option<f64>,
    /// Consecutive frames a state must hold before it is announced.
    #[arg(long, global = true)]
    stability_frames: Option<u32>,
    #[arg(long, global = true)]
    min_message_interval_ms: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract constraints from clinical note files.
    Parse {
        #[arg(required = true)]
        notes: Vec<PathBuf>,
    },
    /// Run a synthetic exercise against a note.
    Simulate(SimulateArgs),
    /// Serve sessions over TCP.
    Serve {
        /// Address to listen on [default: 127.0.0.1:7878].
        #[arg(long, env = config::ENV_ENDPOINT)]
        endpoint: Option<String>,
        /// Directory for per-session log files.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        heartbeat_ms: Option<u64>,
        /// Frames buffered per connection before the oldest is dropped.
        #[arg(long, default_value_t = 64)]
        mailbox: usize,
    },
    /// Re-run a recorded session file.
    Replay {
        file: PathBuf,
        /// Playback rate; 0 replays as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Canonical constraint file to use instead of the recording's.
        #[arg(long, conflicts_with = "note")]
        constraints: Option<PathBuf>,
        /// Note text to use instead of the recording's constraints.
        #[arg(long)]
        note: Option<String>,
        /// Record zero latency so output is reproducible byte for byte.
        #[arg(long)]
        logical_clock: bool,
    },
    /// Measure per-frame engine latency under a fixed frame rate.
    Bench {
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value_t = 60.0)]
        duration_s: f64,
        /// Extra consumer time per frame, in microseconds.
        #[arg(long, default_value_t = 0)]
        consumer_delay_us: u64,
        #[arg(long, default_value_t = 64)]
        mailbox: usize,
        #[arg(long, default_value_t = 100.0)]
        peak: f64,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Note text.
    #[arg(long, required_unless_present = "note_file", conflicts_with = "note_file")]
    note: Option<String>,
    #[arg(long)]
    note_file: Option<PathBuf>,
    /// Peak commanded angle in degrees.
    #[arg(long, default_value_t = 90.0)]
    peak: f64,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    #[arg(long, default_value_t = 4000)]
    period_ms: u64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Landmark noise standard deviation, normalized units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "left")]
    side: SideArg,
    #[arg(long)]
    logical_clock: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

enum Failure {
    Input(String),
    Runtime(String),
}

type CmdResult = Result<(), Failure>;

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn settings(cli: &Cli, endpoint: Option<String>) -> Result<Settings, Failure> {
    let f = &cli.feedback;
    let flags = FileConfig {
        delta_deg: f.delta_deg,
        optimal_band_deg: f.optimal_band_deg,
        under_band_deg: f.under_band_deg,
        stability_frames: f.stability_frames,
        min_message_interval_ms: f.min_message_interval_ms,
        endpoint,
        ..FileConfig::default()
    };
    // clap has already folded REHAB_CONFIG and REHAB_ENDPOINT into the flags.
    config::resolve(flags, cli.config.as_deref(), None, None).map_err(input)
}

fn run(cli: Cli) -> CmdResult {
    let mut out = io::stdout().lock();
    let format = cli.format;
    match &cli.command {
        Command::Parse { notes } => cmd_parse(&mut out, format, notes),
        Command::Simulate(args) => {
            let s = settings(&cli, None)?;
            cmd_simulate(&mut out, format, args, &s)
        }
        Command::Serve {
            endpoint,
            log_dir,
            heartbeat_ms,
            mailbox,
        } => {
            let mut s = settings(&cli, endpoint.clone())?;
            if let Some(dir) = log_dir {
                s.log_dir = Some(dir.clone());
            }
            if let Some(h) = heartbeat_ms {
                s.heartbeat_ms = *h;
            }
            cmd_serve(&mut out, format, &s, *mailbox)
        }
        Command::Replay {
            file,
            speed,
            constraints,
            note,
            logical_clock,
        } => {
            let s = settings(&cli, None)?;
            let open = match (constraints, note) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
                    let set = from_schema(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
                    Some(OpenRecord {
                        constraints: Some(to_schema_value(&set)),
                        config: Some(s.feedback),
                        ..OpenRecord::default()
                    })
                }
                (None, Some(text)) => Some(OpenRecord {
                    note: Some(text.clone()),
                    config: Some(s.feedback),
                    ..OpenRecord::default()
                }),
                (None, None) => None,
            };
            let opts = ReplayOptions {
                speed: *speed,
                open,
                session: SessionConfig {
                    feedback: s.feedback,
                    ..SessionConfig::default()
                },
                logical_clock: *logical_clock,
            };
            cmd_replay(&mut out, format, file, &opts)
        }
        Command::Bench {
            fps,
            duration_s,
            consumer_delay_us,
            mailbox,
            peak,
        } => {
            let s = settings(&cli, None)?;
            if !(duration_s.is_finite() && *duration_s >= 0.0) {
                return Err(input(format!("duration must be non-negative, got {duration_s}")));
            }
            let opts = BenchOptions {
                fps: *fps,
                duration: Duration::from_secs_f64(*duration_s),
                peak_angle_deg: *peak,
                mailbox_capacity: *mailbox,
                consumer_delay: Duration::from_micros(*consumer_delay_us),
                session: SessionConfig {
                    feedback: s.feedback,
                    ..SessionConfig::default()
                },
                ..BenchOptions::default()
            };
            let report = bench::run(&opts).map_err(input)?;
            print_bench(&mut out, format, &report).map_err(runtime)
        }
    }
}

fn cmd_parse(out: &mut impl Write, format: Format, paths: &[PathBuf]) -> CmdResult {
    let parser = NoteParser::default();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let id = path
            .file_stem()
            .map_or_else(|| "note".to_string(), |s| s.to_string_lossy().into_owned());
        let set = parser
            .parse(&ClinicalNote::new(id, text))
            .map_err(|e: ParseError| input(format!("{}: {e}", path.display())))?;
        for finding in validate(&set).findings {
            eprintln!("warning: {}: {}", path.display(), finding.message);
        }
        if set.is_empty() {
            eprintln!("warning: {}: no constraints found", path.display());
        }
        let line = match format {
            Format::Text => to_schema_pretty(&set),
            Format::LineJson => to_schema(&set),
        };
        writeln!(out, "{line}").map_err(runtime)?;
    }
    Ok(())
}

fn cmd_simulate(out: &mut impl Write, format: Format, args: &SimulateArgs, s: &Settings) -> CmdResult {
    let text = match (&args.note, &args.note_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?,
        (None, None) => unreachable!("clap requires one"),
    };
    let mut opts = SimulateOptions::new(ClinicalNote::new("simulate", text), args.peak);
    opts.repetitions = args.reps;
    opts.period_ms = args.period_ms;
    opts.fps = args.fps;
    opts.noise_sigma = args.noise;
    opts.seed = args.seed;
    opts.side = match args.side {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
    };
    opts.session.feedback = s.feedback;
    opts.logical_clock = args.logical_clock;
    let outcome = simulate::simulate(&opts).map_err(|e| match e {
        SimulateError::Phase1(Phase1Error::NoConstraintsExtracted)
        | SimulateError::Phase1(Phase1Error::InvalidConstraints(_))
        | SimulateError::NoMeasurableJoint
        | SimulateError::Trajectory(_) => input(e),
        other => runtime(other),
    })?;
    if format == Format::Text {
        if let Some(url) = &outcome.state.video_url {
            writeln!(out, "demonstration: {url}").map_err(runtime)?;
        }
    }
    print_events(out, format, &outcome.events).map_err(runtime)?;
    print_summary(out, format, &outcome.summary).map_err(runtime)
}

fn cmd_replay(out: &mut impl Write, format: Format, file: &Path, opts: &ReplayOptions) -> CmdResult {
    let outcome = replay::replay_file(file, opts).map_err(|e| match e {
        ReplayError::Session(_) => runtime(e),
        other => input(other),
    })?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    print_events(out, format, &outcome.events).map_err(runtime)?;
    print_summary(out, format, &outcome.summary).map_err(runtime)
}

fn cmd_serve(out: &mut impl Write, format: Format, s: &Settings, mailbox: usize) -> CmdResult {
    let listener = server::bind(&s.endpoint).map_err(runtime)?;
    let addr = listener.local_addr().map_err(runtime)?;
    if let Some(dir) = &s.log_dir {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    let cfg = ServerConfig {
        session: SessionConfig {
            feedback: s.feedback,
            ..SessionConfig::default()
        },
        heartbeat: Duration::from_millis(s.heartbeat_ms),
        mailbox_capacity: mailbox,
        log_dir: s.log_dir.clone(),
        ..ServerConfig::default()
    };
    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&shutdown);
        ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).map_err(runtime)?;
    }
    match format {
        Format::Text => writeln!(out, "listening on {addr}"),
        Format::LineJson => writeln!(out, "{}", json!({"type": "listening", "endpoint": addr.to_string()})),
    }
    .and_then(|()| out.flush())
    .map_err(runtime)?;
    server::serve(listener, cfg, shutdown).map_err(runtime)
}

fn print_events(out: &mut impl Write, format: Format, events: &[FeedbackEvent]) -> io::Result<()> {
    for e in events {
        match format {
            Format::Text => {
                let theta = e.theta_deg.map_or_else(String::new, |t| format!(" θ={t:.1}°"));
                writeln!(
                    out,
                    "frame {:>5} {:>7} ms  {:<17} {:<9}{theta}  {}",
                    e.frame_id,
                    e.t_ms,
                    e.state.as_str(),
                    format!("[{}]", e.severity.as_str()),
                    e.message
                )?;
            }
            Format::LineJson => Record::Event(e.clone()).write_to(out)?,
        }
    }
    Ok(())
}

fn print_summary(out: &mut impl Write, format: Format, s: &SessionSummary) -> io::Result<()> {
    match format {
        Format::LineJson => Record::Summary(s.clone()).write_to(out),
        Format::Text => {
            writeln!(out, "duration          {} ms", s.duration_ms)?;
            writeln!(out, "frames processed  {}", s.frames_processed)?;
            writeln!(out, "frames dropped    {}", s.frames_dropped)?;
            writeln!(out, "critical episodes {}", s.critical_violations)?;
            writeln!(out, "events emitted    {}", s.events_emitted)?;
            writeln!(
                out,
                "latency           mean {:.1} µs, p95 {} µs, max {} µs",
                s.latency.mean_us, s.latency.p95_us, s.latency.max_us
            )?;
            writeln!(out, "dwell")?;
            for (state, fraction) in &s.dwell {
                writeln!(out, "  {:<17} {:>6.2}%", state.as_str(), fraction * 100.0)?;
            }
            Ok(())
        }
    }
}

fn print_bench(out: &mut impl Write, format: Format, r: &BenchReport) -> io::Result<()> {
    match format {
        Format::LineJson => {
            let mut value = serde_json::to_value(r).expect("report serializes");
            value
                .as_object_mut()
                .expect("report is an object")
                .insert("type".into(), json!("bench"));
            writeln!(out, "{value}")
        }
        Format::Text => {
            writeln!(out, "target fps        {}", r.target_fps)?;
            writeln!(out, "duration          {} s", r.duration_s)?;
            writeln!(out, "frames sent       {}", r.frames_sent)?;
            writeln!(out, "frames processed  {}", r.frames_processed)?;
            writeln!(out, "frames dropped    {}", r.frames_dropped)?;
            writeln!(out, "achieved fps      {:.2}", r.achieved_fps)?;
            writeln!(
                out,
                "latency           mean {:.1} µs, p95 {} µs, max {} µs",
                r.latency.mean_us, r.latency.p95_us, r.latency.max_us
            )?;
            writeln!(out, "events emitted    {}", r.events_emitted)
        }
    }
}

//! TCP server: one connection is one session.
//!
//! The first line must be an `open` record, which the server acknowledges
//! with its own `open` record. Frame lines follow; the server answers with
//! `event` records as they are emitted, `error` records for rejected lines
//! and a `heartbeat` after each quiet interval. The session ends when the
//! client closes its side of the connection.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rehabloop_core::session::{LogRecord, Session, SessionConfig};
use rehabloop_core::synthesis::{MockSynthesis, PromptTemplate};
use thiserror::Error;

use crate::ingest::{codes, open_ack, open_config, open_state, session_error, Inbound, Ingest};
use crate::mailbox::Mailbox;
use crate::protocol::{encode_frame, ErrorRecord, Record};
use crate::providers::{MonotonicClock, TimeoutProvider};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub session: SessionConfig,
    /// Quiet interval after which a heartbeat is sent.
    pub heartbeat: Duration,
    /// Frames buffered per connection before the oldest is dropped.
    pub mailbox_capacity: usize,
    /// Directory for per-session log files, if any.
    pub log_dir: Option<PathBuf>,
    pub synthesis_timeout: Duration,
    /// How often blocked threads check for shutdown.
    pub poll: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            session: SessionConfig::default(),
            heartbeat: Duration::from_secs(5),
            mailbox_capacity: 64,
            log_dir: None,
            synthesis_timeout: Duration::from_secs(2),
            poll: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {endpoint}: {source}")]
    BindFailure { endpoint: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn bind(endpoint: &str) -> Result<TcpListener, ServeError> {
    let fail = |source| ServeError::BindFailure {
        endpoint: endpoint.into(),
        source,
    };
    let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs().map_err(fail)?.collect();
    TcpListener::bind(&addrs[..]).map_err(fail)
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, ends open sessions and waits for every thread.
    pub fn shutdown(self) -> io::Result<()> {
        self.shutdown.store(true, Ordering::SeqCst);
        self.thread
            .join()
            .unwrap_or_else(|_| Err(io::Error::other("server thread panicked")))
    }
}

pub fn spawn(listener: TcpListener, cfg: ServerConfig) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    let thread = thread::Builder::new()
        .name("rehabloop-accept".into())
        .spawn(move || serve(listener, cfg, flag))?;
    Ok(ServerHandle {
        addr,
        shutdown,
        thread,
    })
}

/// Accepts connections until `shutdown` is set.
pub fn serve(listener: TcpListener, cfg: ServerConfig, shutdown: Arc<AtomicBool>) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let cfg = Arc::new(cfg);
    let counter = AtomicU64::new(0);
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
                let cfg = Arc::clone(&cfg);
                let shutdown = Arc::clone(&shutdown);
                log::info!("connection {n} from {peer}");
                workers.push(thread::spawn(move || {
                    if let Err(e) = connection(stream, n, &cfg, &shutdown) {
                        log::warn!("connection {n}: {e}");
                    }
                }));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(cfg.poll.min(Duration::from_millis(10))),
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

/// Reads `\n`-terminated lines from a socket with a read timeout, so the
/// caller can notice shutdown. A final unterminated line is returned as is.
struct LineReader {
    inner: BufReader<TcpStream>,
    buf: Vec<u8>,
}

impl LineReader {
    fn next(&mut self, stop: &dyn Fn() -> bool) -> io::Result<Option<Vec<u8>>> {
        loop {
            if stop() {
                return Ok(None);
            }
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) if self.buf.is_empty() => return Ok(None),
                Ok(_) if self.buf.ends_with(b"\n") => return Ok(Some(std::mem::take(&mut self.buf))),
                Ok(0) => return Ok(Some(std::mem::take(&mut self.buf))),
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
                Err(e) => return Err(e),
            }
        }
    }
}

fn send(out: &mut BufWriter<TcpStream>, record: &Record) -> io::Result<()> {
    record.write_to(out)?;
    out.flush()
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn connection(stream: TcpStream, n: u64, cfg: &ServerConfig, shutdown: &AtomicBool) -> io::Result<()> {
    stream.set_read_timeout(Some(cfg.poll))?;
    stream.set_nodelay(true)?;
    let mut out = BufWriter::new(stream.try_clone()?);
    let mut lines = LineReader {
        inner: BufReader::new(stream.try_clone()?),
        buf: Vec::new(),
    };
    let stopped = || shutdown.load(Ordering::SeqCst);

    let Some(first) = lines.next(&stopped)? else {
        return Ok(());
    };
    let reject = |out: &mut BufWriter<TcpStream>, err: ErrorRecord| {
        log::warn!("connection {n}: {}: {}", err.code, err.detail);
        let sent = send(out, &Record::Error(err));
        let _ = stream.shutdown(Shutdown::Both);
        sent
    };
    let open = match Record::parse(&first) {
        Ok(Record::Open(open)) => open,
        Ok(_) => return reject(&mut out, ErrorRecord::new(codes::BAD_OPEN, "first record must be an open record")),
        Err(e) => return reject(&mut out, ErrorRecord::new(codes::BAD_OPEN, e.to_string())),
    };
    let synthesis = TimeoutProvider::new(MockSynthesis, cfg.synthesis_timeout);
    let state = match open_state(&open, &format!("session-{n}"), &synthesis, &PromptTemplate::bundled()) {
        Ok(state) => state,
        Err(e) => return reject(&mut out, e),
    };
    let session = match Session::with_clock(state, open_config(&open, cfg.session), MonotonicClock::new()) {
        Ok(s) => s,
        Err(e) => return reject(&mut out, session_error(&e)),
    };
    let ack = open_ack(&session);
    send(&mut out, &ack)?;
    let mut log_file = match &cfg.log_dir {
        Some(dir) => {
            let path = dir.join(format!("{n:04}-{}.ndjson", sanitize(&session.state().session_id)));
            let mut f = BufWriter::new(File::create(&path)?);
            ack.write_to(&mut f)?;
            log::info!("connection {n}: logging to {}", path.display());
            Some(f)
        }
        None => None,
    };

    let mailbox = Arc::new(Mailbox::new(cfg.mailbox_capacity));
    let done = Arc::new(AtomicBool::new(false));
    let reader = {
        let mailbox = Arc::clone(&mailbox);
        let done = Arc::clone(&done);
        thread::spawn(move || {
            let stop = || done.load(Ordering::SeqCst);
            loop {
                match lines.next(&stop) {
                    Ok(Some(line)) => match Inbound::classify(&line) {
                        Inbound::Skip => {}
                        inbound => {
                            mailbox.push(inbound);
                        }
                    },
                    Ok(None) => break,
                    Err(e) => {
                        log::warn!("connection {n}: read failed: {e}");
                        break;
                    }
                }
            }
            mailbox.close();
        })
    };

    let mut ingest = Ingest::new(session);
    let mut logged = 0;
    let mut last_sent = Instant::now();
    let result = (|| -> io::Result<()> {
        loop {
            if shutdown.load(Ordering::SeqCst) {
                return Ok(());
            }
            let wait = cfg.heartbeat.saturating_sub(last_sent.elapsed()).min(cfg.poll);
            let delivery = mailbox.take(wait);
            let mut replies = Vec::new();
            for old in delivery.displaced {
                match old {
                    Inbound::Frame(frame) => ingest.backpressure(&frame),
                    other => {
                        if let Err(e) = ingest.apply(other) {
                            replies.push(Record::Error(e));
                        }
                    }
                }
            }
            if let Some(item) = delivery.item {
                if let (Some(f), Inbound::Frame(frame)) = (log_file.as_mut(), &item) {
                    f.write_all(encode_frame(frame).as_bytes())?;
                }
                match ingest.apply(item) {
                    Ok(Some(event)) => replies.push(Record::Event(event)),
                    Ok(None) => {}
                    Err(e) => replies.push(Record::Error(e)),
                }
            }
            if let Some(f) = log_file.as_mut() {
                for r in &ingest.session().log().records()[logged..] {
                    match r {
                        LogRecord::Eval(e) => Record::Eval(e.clone()).write_to(f)?,
                        LogRecord::Drop(d) => Record::Drop(d.clone()).write_to(f)?,
                    }
                }
            }
            logged = ingest.session().log().len();
            for r in &replies {
                r.write_to(&mut out)?;
            }
            if !replies.is_empty() {
                out.flush()?;
                last_sent = Instant::now();
            }
            if delivery.finished {
                return Ok(());
            }
            if last_sent.elapsed() >= cfg.heartbeat {
                send(&mut out, &Record::Heartbeat)?;
                last_sent = Instant::now();
            }
        }
    })();

    done.store(true, Ordering::SeqCst);
    mailbox.close();
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    let session = ingest.into_session();
    if let Some(mut f) = log_file {
        if let Ok(summary) = session.summarize() {
            Record::Summary(summary).write_to(&mut f)?;
        }
        f.flush()?;
    }
    log::info!(
        "connection {n}: session {} ended after {} records",
        session.state().session_id,
        session.log().len()
    );
    result
}

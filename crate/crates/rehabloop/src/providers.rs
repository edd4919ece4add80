//! Std-only implementations of the core's provider traits.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rehabloop_core::session::Clock;
use rehabloop_core::synthesis::{SynthesisError, SynthesisPrompt, SynthesisProvider};

/// Microseconds since construction, from the monotonic system clock.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_us(&self) -> u64 {
        self.origin.elapsed().as_micros() as u64
    }
}

/// Wall-clock or logical (always zero) latency source, chosen at run time.
#[derive(Debug, Clone, Copy)]
pub enum EngineClock {
    Logical,
    Wall(MonotonicClock),
}

impl EngineClock {
    pub fn new(logical: bool) -> Self {
        if logical {
            EngineClock::Logical
        } else {
            EngineClock::Wall(MonotonicClock::new())
        }
    }
}

impl Clock for EngineClock {
    fn now_us(&self) -> u64 {
        match self {
            EngineClock::Logical => 0,
            EngineClock::Wall(c) => c.now_us(),
        }
    }
}

/// Gives up on a slow provider after `timeout`. The abandoned call keeps
/// running on its own thread.
pub struct TimeoutProvider<P> {
    inner: Arc<P>,
    timeout: Duration,
}

impl<P> TimeoutProvider<P> {
    pub fn new(inner: P, timeout: Duration) -> Self {
        TimeoutProvider {
            inner: Arc::new(inner),
            timeout,
        }
    }
}

impl<P: SynthesisProvider + Send + Sync + 'static> SynthesisProvider for TimeoutProvider<P> {
    fn synthesize(&self, prompt: &SynthesisPrompt) -> Result<String, SynthesisError> {
        let (tx, rx) = mpsc::channel();
        let inner = Arc::clone(&self.inner);
        let prompt = prompt.clone();
        thread::spawn(move || {
            let _ = tx.send(inner.synthesize(&prompt));
        });
        match rx.recv_timeout(self.timeout) {
            Ok(result) => result,
            Err(_) => Err(SynthesisError::ProviderUnavailable(format!(
                "timed out after {} ms",
                self.timeout.as_millis()
            ))),
        }
    }
}

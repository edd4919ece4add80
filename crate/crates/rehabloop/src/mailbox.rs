//! Bounded hand-off between a connection's reader and its evaluator.
//!
//! When full, the oldest queued item is displaced so the evaluator always
//! sees the freshest frames. Displaced items are handed to the consumer on
//! its next take so it can log them.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct State<T> {
    queue: VecDeque<T>,
    displaced: Vec<T>,
    closed: bool,
}

#[derive(Debug)]
pub struct Mailbox<T> {
    state: Mutex<State<T>>,
    ready: Condvar,
    capacity: usize,
}

/// What one [`Mailbox::take`] returns.
#[derive(Debug, PartialEq)]
pub struct Delivery<T> {
    /// Items pushed out by newer ones since the last take, oldest first.
    pub displaced: Vec<T>,
    pub item: Option<T>,
    /// The producer has closed and the queue is drained.
    pub finished: bool,
}

impl<T> Mailbox<T> {
    pub fn new(capacity: usize) -> Self {
        Mailbox {
            state: Mutex::new(State {
                queue: VecDeque::with_capacity(capacity.max(1)),
                displaced: Vec::new(),
                closed: false,
            }),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State<T>> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueues `item`; returns false if it displaced an older one.
    pub fn push(&self, item: T) -> bool {
        let mut s = self.lock();
        let mut kept = true;
        if s.queue.len() >= self.capacity {
            if let Some(old) = s.queue.pop_front() {
                s.displaced.push(old);
                kept = false;
            }
        }
        s.queue.push_back(item);
        drop(s);
        self.ready.notify_one();
        kept
    }

    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Waits up to `timeout` for an item.
    pub fn take(&self, timeout: Duration) -> Delivery<T> {
        let deadline = Instant::now() + timeout;
        let mut s = self.lock();
        while s.queue.is_empty() && s.displaced.is_empty() && !s.closed {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            s = self
                .ready
                .wait_timeout(s, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        let displaced = std::mem::take(&mut s.displaced);
        let item = s.queue.pop_front();
        Delivery {
            displaced,
            finished: item.is_none() && s.closed && s.queue.is_empty(),
            item,
        }
    }
}

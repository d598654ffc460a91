//! Buffered, reconnecting delivery of suspicion events to the cloud.

use std::collections::VecDeque;
use std::io;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::EdgeError;
use crate::protocol::{Payload, SuspicionEvent};

pub const DEFAULT_BUFFER_CAP: usize = 1_000;

pub trait Clock {
    /// Monotonic time since an arbitrary start.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Simulated clock: sleeping advances time instantly.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    now: Arc<Mutex<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

pub trait Link {
    fn send(&mut self, payload: &Payload) -> io::Result<()>;
}

pub trait Connector {
    fn connect(&mut self) -> io::Result<Box<dyn Link>>;
}

/// Exponential backoff: `base * 2^failures`, capped.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    cap: Duration,
    failures: u32,
}

impl Backoff {
    pub fn new(base: Duration, cap: Duration) -> Self {
        Self {
            base,
            cap,
            failures: 0,
        }
    }

    /// Delay before the next attempt, counting one more failure.
    pub fn next_delay(&mut self) -> Duration {
        let factor = 1u32.checked_shl(self.failures).unwrap_or(u32::MAX);
        self.failures = self.failures.saturating_add(1);
        self.base.saturating_mul(factor).min(self.cap)
    }

    pub fn reset(&mut self) {
        self.failures = 0;
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }
}

#[derive(Debug, Clone)]
pub struct UplinkConfig {
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub buffer_cap: usize,
    /// Consecutive failed connects tolerated while draining at end of input.
    pub max_drain_attempts: u32,
}

impl Default for UplinkConfig {
    fn default() -> Self {
        Self {
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(30),
            buffer_cap: DEFAULT_BUFFER_CAP,
            max_drain_attempts: 10,
        }
    }
}

pub struct Uplink<C: Connector, K: Clock> {
    connector: C,
    clock: K,
    config: UplinkConfig,
    link: Option<Box<dyn Link>>,
    pending: VecDeque<SuspicionEvent>,
    backoff: Backoff,
    next_attempt: Duration,
    delivered: u64,
    dropped: u64,
    peak_pending: usize,
}

impl<C: Connector, K: Clock> Uplink<C, K> {
    pub fn new(connector: C, clock: K, config: UplinkConfig) -> Self {
        Self {
            connector,
            backoff: Backoff::new(config.backoff_base, config.backoff_cap),
            next_attempt: clock.now(),
            clock,
            config,
            link: None,
            pending: VecDeque::new(),
            delivered: 0,
            dropped: 0,
            peak_pending: 0,
        }
    }

    /// Queue an event; the oldest is dropped when the buffer is full.
    pub fn enqueue(&mut self, event: SuspicionEvent) {
        if self.pending.len() >= self.config.buffer_cap {
            self.pending.pop_front();
            self.dropped += 1;
        }
        self.pending.push_back(event);
        self.peak_pending = self.peak_pending.max(self.pending.len());
    }

    pub fn is_connected(&self) -> bool {
        self.link.is_some()
    }

    fn try_connect(&mut self) {
        match self.connector.connect() {
            Ok(link) => {
                debug!("uplink connected");
                self.backoff.reset();
                self.link = Some(link);
            }
            Err(e) => {
                let delay = self.backoff.next_delay();
                warn!("uplink connect failed ({e}); retry in {delay:?}");
                self.next_attempt = self.clock.now() + delay;
            }
        }
    }

    /// Connect if due, then send as much of the backlog as the link takes.
    pub fn pump(&mut self) {
        if self.link.is_none() && self.clock.now() >= self.next_attempt {
            self.try_connect();
        }
        while let (Some(link), Some(front)) = (self.link.as_mut(), self.pending.front()) {
            match link.send(&Payload::Suspicion(front.clone())) {
                Ok(()) => {
                    self.pending.pop_front();
                    self.delivered += 1;
                }
                Err(e) => {
                    warn!("uplink send failed ({e}); reconnecting");
                    self.link = None;
                    self.next_attempt = self.clock.now() + self.backoff.next_delay();
                }
            }
        }
    }

    /// Deliver everything still pending, sleeping between reconnects.
    pub fn drain(&mut self) -> Result<(), EdgeError> {
        loop {
            self.pump();
            if self.pending.is_empty() {
                return Ok(());
            }
            if self.link.is_none() {
                let attempts = self.backoff.failures();
                if attempts >= self.config.max_drain_attempts {
                    return Err(EdgeError::Unreachable {
                        attempts,
                        pending: self.pending.len(),
                    });
                }
                let now = self.clock.now();
                if self.next_attempt > now {
                    self.clock.sleep(self.next_attempt - now);
                }
            }
        }
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn peak_pending(&self) -> usize {
        self.peak_pending
    }

    pub fn clock(&self) -> &K {
        &self.clock
    }

    pub fn connector_mut(&mut self) -> &mut C {
        &mut self.connector
    }
}

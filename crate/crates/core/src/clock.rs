//! The per-run clock.
//!
//! One monotonic clock drives a whole run: generators pace against it and
//! windowed operators stamp releases with it, so event-time latency is a
//! difference of readings from a single source. Tests use the manual mode
//! to pin release times exactly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

enum ClockMode {
    Wall(Instant),
    Manual(AtomicU64),
}

pub struct RunClock {
    mode: ClockMode,
}

impl RunClock {
    /// Monotonic wall clock with its origin at construction time.
    pub fn wall() -> Self {
        RunClock {
            mode: ClockMode::Wall(Instant::now()),
        }
    }

    /// A clock that only moves when told to.
    pub fn manual(start_ms: u64) -> Self {
        RunClock {
            mode: ClockMode::Manual(AtomicU64::new(start_ms)),
        }
    }

    /// Milliseconds since the run origin.
    pub fn rel_now_ms(&self) -> u64 {
        match &self.mode {
            ClockMode::Wall(origin) => origin.elapsed().as_millis() as u64,
            ClockMode::Manual(t) => t.load(Ordering::Relaxed),
        }
    }

    pub fn set_ms(&self, ms: u64) {
        if let ClockMode::Manual(t) = &self.mode {
            t.store(ms, Ordering::Relaxed);
        }
    }

    pub fn advance_ms(&self, ms: u64) {
        if let ClockMode::Manual(t) = &self.mode {
            t.fetch_add(ms, Ordering::Relaxed);
        }
    }
}

impl Default for RunClock {
    fn default() -> Self {
        RunClock::wall()
    }
}

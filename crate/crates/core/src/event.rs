//! Events and window arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A timestamped key/value record, the atomic unit flowing through a
/// dataflow.
///
/// `event_time` is assigned once, when the event is first ingested, and is
/// forwarded untouched by every stateless transformation. The payload is an
/// opaque byte string; generated events use it as variable-length filler to
/// hit a target serialized size (with the event type in the first byte),
/// while windowed results reuse it to carry the release timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub key: u64,
    pub value: u64,
    /// Milliseconds since the run epoch, assigned at first ingestion.
    pub event_time: u64,
    pub payload: Vec<u8>,
}

impl Event {
    pub fn new(key: u64, value: u64, event_time: u64) -> Self {
        Event {
            key,
            value,
            event_time,
            payload: Vec::new(),
        }
    }

    pub fn with_payload(key: u64, value: u64, event_time: u64, payload: Vec<u8>) -> Self {
        Event {
            key,
            value,
            event_time,
            payload,
        }
    }

    /// Serialized size of this event inside a wire frame.
    pub fn wire_len(&self) -> usize {
        crate::message::EVENT_HEADER_LEN + self.payload.len()
    }
}

/// Window size was zero.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("window size must be > 0 ms")]
pub struct ZeroWindowSize;

/// Tumbling-window configuration. Window `i` covers event times in
/// `[i * size, (i + 1) * size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    window_size_ms: u64,
}

impl WindowSpec {
    pub fn new(window_size_ms: u64) -> Result<Self, ZeroWindowSize> {
        if window_size_ms == 0 {
            return Err(ZeroWindowSize);
        }
        Ok(WindowSpec { window_size_ms })
    }

    pub fn size_ms(&self) -> u64 {
        self.window_size_ms
    }

    /// `floor(event_time / window_size)`.
    pub fn window_id(&self, event_time_ms: u64) -> u64 {
        event_time_ms / self.window_size_ms
    }

    /// Inclusive start of the given window.
    pub fn window_start_ms(&self, window_id: u64) -> u64 {
        window_id * self.window_size_ms
    }
}

/// Free-function form of [`WindowSpec::window_id`].
pub fn window_id(event_time_ms: u64, spec: WindowSpec) -> u64 {
    spec.window_id(event_time_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_id_basics() {
        let spec = WindowSpec::new(10_000).unwrap();
        assert_eq!(spec.window_id(0), 0);
        assert_eq!(spec.window_id(25_000), 2);
    }

    #[test]
    fn windows_are_half_open() {
        let spec = WindowSpec::new(10_000).unwrap();
        assert_eq!(spec.window_id(9_999), 0);
        assert_eq!(spec.window_id(10_000), 1);
    }

    #[test]
    fn zero_window_size_rejected() {
        assert!(WindowSpec::new(0).is_err());
    }

    #[test]
    fn event_time_lies_in_its_window() {
        let spec = WindowSpec::new(7).unwrap();
        for t in [0u64, 1, 6, 7, 13, 14, 1_000_003] {
            let w = spec.window_id(t);
            assert!(spec.window_start_ms(w) <= t);
            assert!(t < spec.window_start_ms(w + 1));
        }
    }
}

//! Per-vertex counters, dumped at shutdown and inspected by tests.

use serde::Serialize;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct VertexMetrics {
    pub events_in: AtomicU64,
    pub events_out: AtomicU64,
    pub messages_in: AtomicU64,
    pub markers_in: AtomicU64,
    /// Events intentionally discarded by operator semantics: unmatched
    /// split conditions, absent static-join keys, one-sided join keys,
    /// zero-divisor join pairs.
    pub dropped: AtomicU64,
    /// Events for windows that were already released.
    pub late: AtomicU64,
    /// Markers received twice for the same (endpoint, window).
    pub duplicate_markers: AtomicU64,
    pub op_errors: AtomicU64,
    /// Messages this vertex's sender threads handed to the transport.
    pub transport_sends: AtomicU64,
    /// Messages moved directly into a same-rank successor queue.
    pub pipeline_transfers: AtomicU64,
}

impl VertexMetrics {
    pub fn add(&self, counter: &AtomicU64, n: u64) {
        counter.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            events_in: self.events_in.load(Ordering::Relaxed),
            events_out: self.events_out.load(Ordering::Relaxed),
            messages_in: self.messages_in.load(Ordering::Relaxed),
            markers_in: self.markers_in.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
            late: self.late.load(Ordering::Relaxed),
            duplicate_markers: self.duplicate_markers.load(Ordering::Relaxed),
            op_errors: self.op_errors.load(Ordering::Relaxed),
            transport_sends: self.transport_sends.load(Ordering::Relaxed),
            pipeline_transfers: self.pipeline_transfers.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MetricsSnapshot {
    pub events_in: u64,
    pub events_out: u64,
    pub messages_in: u64,
    pub markers_in: u64,
    pub dropped: u64,
    pub late: u64,
    pub duplicate_markers: u64,
    pub op_errors: u64,
    pub transport_sends: u64,
    pub pipeline_transfers: u64,
}

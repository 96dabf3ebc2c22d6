//! The in-memory rate-controlled event generator.
//!
//! One instance runs per rank; the total target rate is split evenly
//! across instances. Pacing is a token-bucket against the run clock: event
//! `j` of an instance with per-instance rate `R` is scheduled at
//! `j * 1000 / R` ms, and that schedule time — not the instant the event
//! actually left the generator — becomes its event time. The two coincide
//! while the engine keeps up; under back-pressure emission falls behind
//! schedule, which is exactly what inflates event-time latency. The
//! schedule also makes every run with a fixed seed reproduce the same
//! events in the same windows regardless of machine load.
//!
//! Event schema: `key` is the ad id, `value` is a uniform 32-bit shard
//! number, and the first payload byte is the event type (0 view, 1 click,
//! 2 purchase, drawn uniformly). Payload length varies uniformly so the
//! mean serialized event hits `avg_event_bytes`.
//!
//! When the schedule first crosses into window `w + 1` the instance
//! broadcasts a marker for `w` on every outgoing channel before any
//! `w + 1` data, and it marks its last open window before the stream ends.

use crate::clock::RunClock;
use crate::event::Event;
use crate::message::EVENT_HEADER_LEN;
use crate::runtime::operator::{OpError, Source, SourceContext};
use crate::runtime::topology::GeneratorParams;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub const EVENT_TYPE_VIEW: u8 = 0;
pub const EVENT_TYPE_CLICK: u8 = 1;
pub const EVENT_TYPE_PURCHASE: u8 = 2;
pub const EVENT_TYPES: u8 = 3;

/// Flush partially filled batches whenever the schedule has advanced this
/// far, so low rates do not trade latency for batching.
const BATCH_FLUSH_INTERVAL_MS: u64 = 50;

/// What one generated event looked like; the ground truth for oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggedEvent {
    pub key: u64,
    pub value: u64,
    pub event_time: u64,
    pub etype: u8,
}

/// Per-rank capture of generated events.
pub struct LogBook {
    per_rank: Vec<Mutex<Vec<LoggedEvent>>>,
}

impl LogBook {
    pub fn new(world_size: usize) -> Arc<Self> {
        Arc::new(LogBook {
            per_rank: (0..world_size).map(|_| Mutex::new(Vec::new())).collect(),
        })
    }

    pub fn take_all(&self) -> Vec<Vec<LoggedEvent>> {
        self.per_rank
            .iter()
            .map(|m| std::mem::take(&mut *m.lock()))
            .collect()
    }
}

/// Aggregate generator counters for a run.
#[derive(Debug, Default)]
pub struct GeneratorStats {
    pub events_emitted: AtomicU64,
    /// Worst observed lag of actual emission behind the schedule; growth
    /// here is back-pressure evidence.
    pub max_schedule_lag_ms: AtomicU64,
}

impl GeneratorStats {
    pub fn record_lag(&self, lag_ms: u64) {
        self.max_schedule_lag_ms.fetch_max(lag_ms, Ordering::Relaxed);
    }
}

/// Splits the total rate evenly; earlier instances take the remainder.
pub fn per_instance_rate(total_rate: u64, world_size: usize, rank: usize) -> u64 {
    let ws = world_size as u64;
    let r = rank as u64;
    total_rate * (r + 1) / ws - total_rate * r / ws
}

pub struct GeneratorSource {
    params: GeneratorParams,
    rank: usize,
    world_size: usize,
    clock: Arc<RunClock>,
    log: Option<Arc<LogBook>>,
    stats: Arc<GeneratorStats>,
}

impl GeneratorSource {
    pub fn new(
        params: GeneratorParams,
        rank: usize,
        world_size: usize,
        clock: Arc<RunClock>,
        log: Option<Arc<LogBook>>,
        stats: Arc<GeneratorStats>,
    ) -> Self {
        GeneratorSource {
            params,
            rank,
            world_size,
            clock,
            log,
            stats,
        }
    }

    fn payload_len_range(&self) -> (u64, u64) {
        // Mean serialized event = EVENT_HEADER_LEN + mean payload length.
        let target = self
            .params
            .avg_event_bytes
            .saturating_sub(EVENT_HEADER_LEN)
            .max(1) as u64;
        (1, 2 * target - 1)
    }
}

impl Source for GeneratorSource {
    fn run(&mut self, ctx: &mut SourceContext<'_>) -> Result<(), OpError> {
        let rate = per_instance_rate(self.params.rate, self.world_size, self.rank);
        if rate == 0 {
            return Ok(());
        }
        let count = rate * self.params.duration_s;
        let num_ads = self.params.num_campaigns * self.params.ads_per_campaign;
        let (len_lo, len_hi) = self.payload_len_range();
        let window_ms = self.params.window_ms.max(1);

        let mut rng = ChaCha8Rng::seed_from_u64(
            self.params
                .seed
                .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(self.rank as u64 + 1)),
        );
        let mut current_window = 0u64;
        let mut last_flush_sched = 0u64;
        let mut emitted = 0u64;

        for j in 0..count {
            let sched_ms = j * 1000 / rate;

            let window = sched_ms / window_ms;
            while current_window < window {
                ctx.broadcast_marker(current_window)?;
                current_window += 1;
            }

            if self.params.paced {
                loop {
                    let now = self.clock.rel_now_ms();
                    if now >= sched_ms {
                        if now > sched_ms {
                            self.stats.record_lag(now - sched_ms);
                        }
                        break;
                    }
                    std::thread::sleep(Duration::from_millis((sched_ms - now).min(5)));
                }
            }

            let ad = rng.random_range(0..num_ads);
            let etype = rng.random_range(0..EVENT_TYPES);
            let value = rng.random::<u32>() as u64;
            let payload_len = rng.random_range(len_lo..=len_hi) as usize;
            let mut payload = vec![0u8; payload_len];
            payload[0] = etype;

            if let Some(log) = &self.log {
                log.per_rank[self.rank].lock().push(LoggedEvent {
                    key: ad,
                    value,
                    event_time: sched_ms,
                    etype,
                });
            }

            ctx.emit(Event::with_payload(ad, value, sched_ms, payload))?;
            emitted += 1;

            if sched_ms.saturating_sub(last_flush_sched) >= BATCH_FLUSH_INTERVAL_MS {
                ctx.flush_all()?;
                last_flush_sched = sched_ms;
            }
        }

        if emitted > 0 {
            ctx.broadcast_marker(current_window)?;
        }
        self.stats.events_emitted.fetch_add(emitted, Ordering::Relaxed);
        Ok(())
    }
}

/// Replays a fixed script of events for tests; relies on stream
/// termination (rather than markers) to close windows.
pub struct ScriptedSource {
    events: Vec<crate::runtime::topology::ScriptedEvent>,
}

impl ScriptedSource {
    pub fn new(events: Vec<crate::runtime::topology::ScriptedEvent>) -> Self {
        ScriptedSource { events }
    }
}

impl Source for ScriptedSource {
    fn run(&mut self, ctx: &mut SourceContext<'_>) -> Result<(), OpError> {
        for ev in self.events.drain(..) {
            let payload = match ev.etype {
                Some(t) => vec![t],
                None => Vec::new(),
            };
            ctx.emit(Event::with_payload(ev.key, ev.value, ev.event_time, payload))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::operator::{Router, SourceOutput};
    use crate::runtime::topology::RoutingStrategy;

    struct Capture {
        events: Mutex<Vec<Event>>,
        markers: Mutex<Vec<u64>>,
    }

    impl SourceOutput for Capture {
        fn push_events(&self, _slot: usize, events: Vec<Event>) -> Result<(), OpError> {
            self.events.lock().extend(events);
            Ok(())
        }

        fn push_marker_all(&self, window_id: u64) -> Result<(), OpError> {
            self.markers.lock().push(window_id);
            Ok(())
        }
    }

    fn drive(params: GeneratorParams) -> (Vec<Event>, Vec<u64>, Arc<GeneratorStats>) {
        let capture = Capture {
            events: Mutex::new(Vec::new()),
            markers: Mutex::new(Vec::new()),
        };
        let stats = Arc::new(GeneratorStats::default());
        let mut source = GeneratorSource::new(
            params,
            0,
            1,
            Arc::new(RunClock::wall()),
            None,
            stats.clone(),
        );
        let router = Router::new(1, 0, 1, RoutingStrategy::ShardByValue, false);
        let mut ctx = SourceContext::new(&capture, &router, 64);
        source.run(&mut ctx).unwrap();
        ctx.flush_all().unwrap();
        (
            capture.events.into_inner(),
            capture.markers.into_inner(),
            stats,
        )
    }

    fn fast_params(rate: u64, duration_s: u64) -> GeneratorParams {
        GeneratorParams {
            rate,
            duration_s,
            window_ms: 1_000,
            seed: 42,
            paced: false,
            ..GeneratorParams::default()
        }
    }

    #[test]
    fn emits_exactly_rate_times_duration() {
        let (events, _, stats) = drive(fast_params(5_000, 2));
        assert_eq!(events.len(), 10_000);
        assert_eq!(stats.events_emitted.load(Ordering::Relaxed), 10_000);
    }

    #[test]
    fn fixed_seed_reproduces_the_stream() {
        let (a, _, _) = drive(fast_params(2_000, 1));
        let (b, _, _) = drive(fast_params(2_000, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn markers_precede_next_window_data() {
        let (events, markers, _) = drive(fast_params(1_000, 3));
        // 3 windows of 1 s at 1000/s: markers 0, 1 at the crossings plus
        // the final open window 2.
        assert_eq!(markers, vec![0, 1, 2]);
        assert_eq!(events.iter().map(|e| e.event_time / 1_000).max(), Some(2));
    }

    #[test]
    fn event_types_roughly_uniform() {
        let (events, _, _) = drive(fast_params(100_000, 1));
        let mut counts = [0u64; 3];
        for e in &events {
            counts[e.payload[0] as usize] += 1;
        }
        let n = events.len() as f64;
        // Chi-square with 2 degrees of freedom; 13.8 is the 0.1% point.
        let expected = n / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 13.8, "type distribution skewed: {counts:?}, chi2={chi2}");
    }

    #[test]
    fn mean_serialized_size_tracks_target() {
        let (events, _, _) = drive(fast_params(50_000, 1));
        let total: usize = events.iter().map(Event::wire_len).sum();
        let mean = total as f64 / events.len() as f64;
        assert!(
            (mean - 136.0).abs() < 2.0,
            "mean serialized event size {mean} not near 136"
        );
    }

    #[test]
    fn rate_splits_evenly_across_instances() {
        let total: u64 = (0..3).map(|r| per_instance_rate(10_000, 3, r)).sum();
        assert_eq!(total, 10_000);
        let split: Vec<u64> = (0..4).map(|r| per_instance_rate(9, 4, r)).collect();
        assert_eq!(split, vec![2, 2, 2, 3]);
    }
}

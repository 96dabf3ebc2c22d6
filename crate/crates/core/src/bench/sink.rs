//! Result collection: the sink operator, windowed-result records, and the
//! CSV outputs.

use crate::clock::RunClock;
use crate::event::{Event, WindowSpec};
use crate::runtime::operator::{EndpointId, OpError, Operator, StepOutputs};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// One finalized windowed event as observed at the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowResultRecord {
    pub window_id: u64,
    pub key: u64,
    pub value: u64,
    pub event_time_ms: u64,
    /// Wall-clock (run-relative) time the releasing operator emitted it.
    pub release_ms: u64,
    /// `release_ms - event_time_ms`; non-negative under the single run
    /// clock with paced ingestion.
    pub latency_ms: i64,
}

impl WindowResultRecord {
    /// Ordering key for deterministic output files.
    pub fn sort_key(&self) -> (u64, u64, u64) {
        (self.window_id, self.key, self.value)
    }
}

/// Gathers every rank's records; shared across ranks in-process.
#[derive(Default)]
pub struct SinkCollector {
    rows: Mutex<Vec<WindowResultRecord>>,
}

impl SinkCollector {
    pub fn new() -> Arc<Self> {
        Arc::new(SinkCollector::default())
    }

    pub fn push(&self, record: WindowResultRecord) {
        self.rows.lock().push(record);
    }

    pub fn take_sorted(&self) -> Vec<WindowResultRecord> {
        let mut rows = std::mem::take(&mut *self.rows.lock());
        rows.sort_by_key(WindowResultRecord::sort_key);
        rows
    }

    pub fn len(&self) -> usize {
        self.rows.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.lock().is_empty()
    }
}

/// Terminal vertex: records every finalized windowed event. The releasing
/// operator's wall-clock stamp arrives as an 8-byte payload; the window id
/// is recomputed from the event time.
pub struct SinkOp {
    spec: WindowSpec,
    collector: Arc<SinkCollector>,
    clock: Arc<RunClock>,
}

impl SinkOp {
    pub fn new(spec: WindowSpec, collector: Arc<SinkCollector>, clock: Arc<RunClock>) -> Self {
        SinkOp {
            spec,
            collector,
            clock,
        }
    }

    fn release_stamp(&self, event: &Event) -> u64 {
        match <[u8; 8]>::try_from(event.payload.as_slice()) {
            Ok(bytes) => u64::from_le_bytes(bytes),
            Err(_) => self.clock.rel_now_ms(),
        }
    }
}

impl Operator for SinkOp {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        _out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        for event in events {
            let release_ms = self.release_stamp(&event);
            self.collector.push(WindowResultRecord {
                window_id: self.spec.window_id(event.event_time),
                key: event.key,
                value: event.value,
                event_time_ms: event.event_time,
                release_ms,
                latency_ms: release_ms as i64 - event.event_time as i64,
            });
        }
        Ok(())
    }

    fn on_marker(
        &self,
        _input: EndpointId,
        _window: u64,
        _out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        Ok(())
    }

    fn on_endpoint_closed(&self, _input: EndpointId, _out: &mut StepOutputs) -> Result<(), OpError> {
        Ok(())
    }
}

/// Run-level summary over the sink records and engine counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rate: u64,
    pub mean_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub windows_processed: u64,
    pub events_processed: u64,
    pub events_dropped: u64,
    pub events_late: u64,
}

pub fn summarize(
    rate: u64,
    records: &[WindowResultRecord],
    events_processed: u64,
    events_dropped: u64,
    events_late: u64,
) -> RunSummary {
    let mut latencies: Vec<i64> = records.iter().map(|r| r.latency_ms).collect();
    latencies.sort_unstable();
    let mean = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().map(|&l| l as f64).sum::<f64>() / latencies.len() as f64
    };
    let p99 = if latencies.is_empty() {
        0.0
    } else {
        let idx = ((latencies.len() as f64 * 0.99).ceil() as usize).saturating_sub(1);
        latencies[idx.min(latencies.len() - 1)] as f64
    };
    RunSummary {
        rate,
        mean_latency_ms: mean,
        p99_latency_ms: p99,
        windows_processed: records.len() as u64,
        events_processed,
        events_dropped,
        events_late,
    }
}

pub const RESULTS_HEADER: &str = "window_id,key,value,event_time_ms,release_ms,latency_ms";
pub const SUMMARY_HEADER: &str =
    "rate,mean_latency_ms,p99_latency_ms,windows_processed,events_processed,events_dropped,events_late";

pub fn write_results_csv(path: &Path, records: &[WindowResultRecord]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            r.window_id, r.key, r.value, r.event_time_ms, r.release_ms, r.latency_ms
        )?;
    }
    file.flush()
}

pub fn write_summary_csv(path: &Path, summary: &RunSummary) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{SUMMARY_HEADER}")?;
    writeln!(
        file,
        "{},{:.3},{:.3},{},{},{},{}",
        summary.rate,
        summary.mean_latency_ms,
        summary.p99_latency_ms,
        summary.windows_processed,
        summary.events_processed,
        summary.events_dropped,
        summary.events_late
    )?;
    file.flush()
}

pub fn read_results_csv(path: &Path) -> std::io::Result<Vec<WindowResultRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("results line {}: expected 6 columns", idx + 1),
            ));
        }
        let parse_err =
            |e: std::num::ParseIntError| std::io::Error::new(std::io::ErrorKind::InvalidData, e);
        records.push(WindowResultRecord {
            window_id: cols[0].parse().map_err(parse_err)?,
            key: cols[1].parse().map_err(parse_err)?,
            value: cols[2].parse().map_err(parse_err)?,
            event_time_ms: cols[3].parse().map_err(parse_err)?,
            release_ms: cols[4].parse().map_err(parse_err)?,
            latency_ms: cols[5].parse().map_err(parse_err)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_is_release_minus_event_time() {
        let collector = SinkCollector::new();
        let sink = SinkOp::new(
            WindowSpec::new(10_000).unwrap(),
            collector.clone(),
            Arc::new(RunClock::manual(0)),
        );
        let mut out = StepOutputs::new(0);
        let event = Event::with_payload(7, 42, 105_000, 112_000u64.to_le_bytes().to_vec());
        sink.on_data(
            EndpointId {
                flat: 0,
                predecessor_index: 0,
                source_rank: 0,
            },
            vec![event],
            &mut out,
        )
        .unwrap();
        let rows = collector.take_sorted();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].window_id, 10);
        assert_eq!(rows[0].latency_ms, 7_000);
    }

    #[test]
    fn empty_run_yields_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), RESULTS_HEADER);
        assert!(read_results_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn results_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![
            WindowResultRecord {
                window_id: 1,
                key: 2,
                value: 3,
                event_time_ms: 4,
                release_ms: 10,
                latency_ms: 6,
            },
            WindowResultRecord {
                window_id: 2,
                key: 9,
                value: 1,
                event_time_ms: 25_000,
                release_ms: 31_000,
                latency_ms: 6_000,
            },
        ];
        write_results_csv(&path, &rows).unwrap();
        assert_eq!(read_results_csv(&path).unwrap(), rows);
    }

    #[test]
    fn summary_percentiles() {
        let records: Vec<WindowResultRecord> = (1..=100)
            .map(|i| WindowResultRecord {
                window_id: 0,
                key: i,
                value: 0,
                event_time_ms: 0,
                release_ms: i,
                latency_ms: i as i64,
            })
            .collect();
        let s = summarize(1000, &records, 500, 2, 3);
        assert_eq!(s.mean_latency_ms, 50.5);
        assert_eq!(s.p99_latency_ms, 99.0);
        assert_eq!(s.windows_processed, 100);
        assert_eq!(s.events_dropped, 2);
        assert_eq!(s.events_late, 3);
    }
}

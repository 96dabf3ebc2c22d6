//! Python bindings: tag codec, window arithmetic, the wire frame codec,
//! whole benchmark runs, and the back-pressure knee detector.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};
use rill_core::bench::{
    build_topology, detect_knee, run_in_process, EngineOptions, StOutcome, StRow, Workload,
    WorkloadSpec,
};
use rill_core::event::WindowSpec;
use rill_core::runtime::GeneratorParams;
use rill_core::tag::ChannelTag;
use rill_core::{Event, Message, MessageKind};

/// Packs a channel identity into its 32-bit message tag.
#[pyfunction]
fn encode_tag(source_rank: u8, source_op: u8, target_rank: u8, target_op: u8) -> u32 {
    ChannelTag::new(source_rank, source_op, target_rank, target_op).encode()
}

/// Unpacks a 32-bit message tag into (source_rank, source_op,
/// target_rank, target_op).
#[pyfunction]
fn decode_tag(tag: u32) -> (u8, u8, u8, u8) {
    let t = ChannelTag::decode(tag);
    (t.source_rank, t.source_op, t.target_rank, t.target_op)
}

/// Tumbling window id of an event time: floor(event_time / window_size).
#[pyfunction]
fn window_id(event_time_ms: u64, window_size_ms: u64) -> PyResult<u64> {
    let spec = WindowSpec::new(window_size_ms).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(spec.window_id(event_time_ms))
}

fn kind_name(kind: MessageKind) -> &'static str {
    match kind {
        MessageKind::Data => "data",
        MessageKind::WindowMarker => "window_marker",
        MessageKind::Terminate => "terminate",
    }
}

/// (key, value, event_time, payload) as passed from Python.
type EventTuple = (u64, u64, u64, Vec<u8>);

/// Serializes one message to its wire frame.
///
/// `events` is a list of `(key, value, event_time, payload)` tuples and is
/// only meaningful for kind "data"; `window_id` only for "window_marker".
#[pyfunction]
#[pyo3(signature = (tag, kind, window_id=0, events=None))]
fn serialize_message(
    py: Python<'_>,
    tag: u32,
    kind: &str,
    window_id: u64,
    events: Option<Vec<EventTuple>>,
) -> PyResult<Py<PyBytes>> {
    let tag = ChannelTag::decode(tag);
    let msg = match kind {
        "data" => Message::data(
            tag,
            events
                .unwrap_or_default()
                .into_iter()
                .map(|(key, value, event_time, payload)| {
                    Event::with_payload(key, value, event_time, payload)
                })
                .collect(),
        ),
        "window_marker" => Message::window_marker(tag, window_id),
        "terminate" => Message::terminate(tag),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown message kind `{other}`"
            )))
        }
    };
    let frame =
        rill_core::serialize_message(&msg).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &frame).into())
}

/// Decodes one wire frame into a dict with keys `tag`, `kind`,
/// `window_id`, and `events`.
#[pyfunction]
fn deserialize_message(py: Python<'_>, frame: &[u8]) -> PyResult<Py<PyDict>> {
    let msg =
        rill_core::deserialize_message(frame).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("tag", msg.tag.encode())?;
    out.set_item("kind", kind_name(msg.kind))?;
    out.set_item("window_id", msg.window_id)?;
    let events = PyList::empty(py);
    for e in &msg.events {
        events.append((
            e.key,
            e.value,
            e.event_time,
            PyBytes::new(py, &e.payload),
        ))?;
    }
    out.set_item("events", events)?;
    Ok(out.into())
}

/// Runs one benchmark workload with all ranks in-process and returns the
/// summary (plus the finalized records when `include_records` is set).
#[pyfunction]
#[pyo3(signature = (workload, world_size=1, rate=10_000, duration_s=10, window_ms=10_000,
                    seed=1, pipelining=false, paced=true, include_records=false))]
#[allow(clippy::too_many_arguments)]
fn run_workload(
    py: Python<'_>,
    workload: &str,
    world_size: usize,
    rate: u64,
    duration_s: u64,
    window_ms: u64,
    seed: u64,
    pipelining: bool,
    paced: bool,
    include_records: bool,
) -> PyResult<Py<PyDict>> {
    let workload = Workload::parse(workload)
        .ok_or_else(|| PyValueError::new_err(format!("unknown workload `{workload}`")))?;
    let spec = WorkloadSpec::new(
        GeneratorParams {
            rate,
            duration_s,
            window_ms,
            seed,
            paced,
            capture_log: false,
            ..GeneratorParams::default()
        },
        pipelining,
    );
    let topology = build_topology(workload, &spec);
    let outcome = py
        .detach(|| run_in_process(&topology, world_size, &EngineOptions::default()))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let summary = outcome.summary(rate);

    let out = PyDict::new(py);
    out.set_item("workload", workload.name())?;
    out.set_item("world_size", world_size)?;
    out.set_item("windows_processed", summary.windows_processed)?;
    out.set_item("events_processed", summary.events_processed)?;
    out.set_item("mean_latency_ms", summary.mean_latency_ms)?;
    out.set_item("p99_latency_ms", summary.p99_latency_ms)?;
    out.set_item("events_dropped", summary.events_dropped)?;
    out.set_item("events_late", summary.events_late)?;
    out.set_item("clean_shutdown", outcome.clean_shutdown())?;
    if include_records {
        let records = PyList::empty(py);
        for r in &outcome.records {
            let row = PyDict::new(py);
            row.set_item("window_id", r.window_id)?;
            row.set_item("key", r.key)?;
            row.set_item("value", r.value)?;
            row.set_item("event_time_ms", r.event_time_ms)?;
            row.set_item("release_ms", r.release_ms)?;
            row.set_item("latency_ms", r.latency_ms)?;
            records.append(row)?;
        }
        out.set_item("records", records)?;
    }
    Ok(out.into())
}

/// Runs the back-pressure knee detector over measured (rate, mean
/// latency) pairs. Returns a dict with `outcome` and, when defined,
/// `sustainable` and `knee_rate`.
#[pyfunction]
#[pyo3(signature = (rates, latencies, baseline_runs=3, backpressure_factor=4.0))]
fn find_knee(
    py: Python<'_>,
    rates: Vec<u64>,
    latencies: Vec<f64>,
    baseline_runs: usize,
    backpressure_factor: f64,
) -> PyResult<Py<PyDict>> {
    if rates.is_empty() || rates.len() != latencies.len() {
        return Err(PyValueError::new_err(
            "rates and latencies must be equally sized and non-empty",
        ));
    }
    let rows: Vec<StRow> = rates
        .into_iter()
        .zip(latencies)
        .map(|(rate, mean_latency_ms)| StRow {
            rate,
            mean_latency_ms,
        })
        .collect();
    let report = detect_knee(&rows, baseline_runs, backpressure_factor);
    let out = PyDict::new(py);
    out.set_item("baseline_latency_ms", report.baseline_latency_ms)?;
    out.set_item("threshold_ms", report.threshold_ms)?;
    match report.outcome {
        StOutcome::Knee {
            sustainable,
            knee_rate,
        } => {
            out.set_item("outcome", "knee")?;
            out.set_item("sustainable", sustainable)?;
            out.set_item("knee_rate", knee_rate)?;
        }
        StOutcome::Exhausted { max_tested } => {
            out.set_item("outcome", "exhausted")?;
            out.set_item("sustainable", max_tested)?;
        }
        StOutcome::BelowStart { first_rate } => {
            out.set_item("outcome", "below_start")?;
            out.set_item("first_rate", first_rate)?;
        }
    }
    Ok(out.into())
}

#[pymodule]
fn rill_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(encode_tag, m)?)?;
    m.add_function(wrap_pyfunction!(decode_tag, m)?)?;
    m.add_function(wrap_pyfunction!(window_id, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_message, m)?)?;
    m.add_function(wrap_pyfunction!(deserialize_message, m)?)?;
    m.add_function(wrap_pyfunction!(run_workload, m)?)?;
    m.add_function(wrap_pyfunction!(find_knee, m)?)?;
    Ok(())
}

//! Orchestration of whole runs: operator instantiation, the in-process
//! launcher (all ranks as threads in one process), and the socket launcher
//! (one rank per call, with result collection onto rank 0).

use crate::bench::generator::{GeneratorSource, GeneratorStats, LogBook, LoggedEvent, ScriptedSource};
use crate::bench::sink::{summarize, RunSummary, SinkCollector, SinkOp, WindowResultRecord};
use crate::clock::RunClock;
use crate::event::{Event, WindowSpec};
use crate::message::MessageKind;
use crate::metrics::MetricsSnapshot;
use crate::ops_stateless::{FilterOp, MapOp, SplitOp, StaticJoinOp, StaticTable};
use crate::ops_stateful::{WindowedAggregate, WindowedJoin};
use crate::runtime::dataflow::{
    build_dataflow, stream_process, BuildError, DataflowOptions, RunReport, VertexCtx,
    VertexFactory,
};
use crate::runtime::operator::VertexBehavior;
use crate::runtime::topology::{OperatorDescriptor, OperatorKind, Topology, COLLECTOR_OP_ID};
use crate::tag::ChannelTag;
use crate::transport::{
    InProcessFabric, SharedTransport, SocketBinding, TransportConfig, TransportError,
};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
}

/// Engine-level knobs, independent of the workload.
#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    pub queue_capacity: usize,
    pub batch_max: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            queue_capacity: 1024,
            batch_max: 128,
        }
    }
}

impl EngineOptions {
    fn dataflow(&self) -> DataflowOptions {
        DataflowOptions {
            queue_capacity: self.queue_capacity,
            batch_max: self.batch_max,
        }
    }
}

/// Instantiates benchmark operators; one factory serves all ranks of a run
/// so they share the clock, the sink collector, and the generator stats.
pub struct BenchFactory {
    pub clock: Arc<RunClock>,
    pub collector: Arc<SinkCollector>,
    pub logbook: Arc<LogBook>,
    pub stats: Arc<GeneratorStats>,
}

impl BenchFactory {
    pub fn new(world_size: usize) -> Self {
        BenchFactory {
            clock: Arc::new(RunClock::wall()),
            collector: SinkCollector::new(),
            logbook: LogBook::new(world_size),
            stats: Arc::new(GeneratorStats::default()),
        }
    }
}

impl VertexFactory for BenchFactory {
    fn make(
        &self,
        descriptor: &OperatorDescriptor,
        ctx: &VertexCtx,
    ) -> Result<VertexBehavior, BuildError> {
        let fail = |reason: String| BuildError::Factory {
            op: descriptor.op_id,
            reason,
        };
        Ok(match &descriptor.kind {
            OperatorKind::Generator(params) => {
                let log = params.capture_log.then(|| self.logbook.clone());
                VertexBehavior::Source(Box::new(GeneratorSource::new(
                    params.clone(),
                    ctx.rank,
                    ctx.world_size,
                    self.clock.clone(),
                    log,
                    self.stats.clone(),
                )))
            }
            OperatorKind::Scripted(params) => {
                let events = params
                    .events
                    .get(ctx.rank)
                    .cloned()
                    .unwrap_or_default();
                VertexBehavior::Source(Box::new(ScriptedSource::new(events)))
            }
            OperatorKind::Map { function } => VertexBehavior::Operator(Box::new(MapOp::new(
                *function,
                ctx.router.clone(),
                ctx.in_endpoints,
            ))),
            OperatorKind::Filter { predicate } => VertexBehavior::Operator(Box::new(
                FilterOp::new(*predicate, ctx.router.clone(), ctx.in_endpoints),
            )),
            OperatorKind::Split { conditions } => VertexBehavior::Operator(Box::new(SplitOp::new(
                conditions.clone(),
                ctx.router.clone(),
                ctx.in_endpoints,
                ctx.metrics.clone(),
            ))),
            OperatorKind::StaticJoin { table } => {
                let table = StaticTable::from_source(table).map_err(|e| fail(e.to_string()))?;
                VertexBehavior::Operator(Box::new(StaticJoinOp::new(
                    Arc::new(table),
                    ctx.router.clone(),
                    ctx.in_endpoints,
                    ctx.metrics.clone(),
                )))
            }
            OperatorKind::Aggregate(params) => VertexBehavior::Operator(Box::new(
                WindowedAggregate::new(
                    params,
                    ctx.router.clone(),
                    ctx.in_endpoints,
                    self.clock.clone(),
                    ctx.metrics.clone(),
                )
                .map_err(|e| fail(e.to_string()))?,
            )),
            OperatorKind::WindowJoin(params) => VertexBehavior::Operator(Box::new(
                WindowedJoin::new(
                    params.window_ms,
                    params.function,
                    ctx.router.clone(),
                    ctx.in_endpoints,
                    self.clock.clone(),
                    ctx.metrics.clone(),
                )
                .map_err(|e| fail(e.to_string()))?,
            )),
            OperatorKind::Sink { window_ms } => {
                let spec = WindowSpec::new(*window_ms)
                    .map_err(|e| fail(e.to_string()))?;
                VertexBehavior::Operator(Box::new(SinkOp::new(
                    spec,
                    self.collector.clone(),
                    self.clock.clone(),
                )))
            }
        })
    }
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    /// All ranks' finalized records, sorted by (window, key, value).
    pub records: Vec<WindowResultRecord>,
    pub reports: Vec<RunReport>,
    /// Per-rank generated-event logs (empty unless capture was on).
    pub logs: Vec<Vec<LoggedEvent>>,
    pub events_generated: u64,
    pub max_schedule_lag_ms: u64,
}

impl RunOutcome {
    pub fn total(&self, pick: impl Fn(&MetricsSnapshot) -> u64) -> u64 {
        self.reports
            .iter()
            .flat_map(|r| r.vertices.iter())
            .map(|v| pick(&v.metrics))
            .sum()
    }

    pub fn events_dropped(&self) -> u64 {
        self.total(|m| m.dropped)
    }

    pub fn events_late(&self) -> u64 {
        self.total(|m| m.late)
    }

    pub fn clean_shutdown(&self) -> bool {
        self.reports.iter().all(RunReport::clean)
    }

    /// Transport sends issued for the outputs of the given operators.
    pub fn transport_sends_for(&self, op_ids: &[u8]) -> u64 {
        self.reports
            .iter()
            .flat_map(|r| r.vertices.iter())
            .filter(|v| op_ids.contains(&v.op_id))
            .map(|v| v.metrics.transport_sends)
            .sum()
    }

    /// The deterministic projection of the sink output: latency columns
    /// are wall-clock measurements and vary run to run.
    pub fn canonical_rows(&self) -> Vec<(u64, u64, u64, u64)> {
        self.records
            .iter()
            .map(|r| (r.window_id, r.key, r.value, r.event_time_ms))
            .collect()
    }

    pub fn summary(&self, rate: u64) -> RunSummary {
        summarize(
            rate,
            &self.records,
            self.events_generated,
            self.events_dropped(),
            self.events_late(),
        )
    }
}

/// Runs the full topology with every rank as a thread in this process.
pub fn run_in_process(
    topology: &Topology,
    world_size: usize,
    options: &EngineOptions,
) -> Result<RunOutcome, HarnessError> {
    let fabric = InProcessFabric::new(world_size, options.queue_capacity)?;
    let factory = BenchFactory::new(world_size);

    let mut instances = Vec::with_capacity(world_size);
    let mut transports: Vec<SharedTransport> = Vec::with_capacity(world_size);
    for rank in 0..world_size {
        let transport: SharedTransport = fabric.handle_for(rank);
        instances.push(build_dataflow(
            topology,
            rank,
            &transport,
            &factory,
            options.dataflow(),
        )?);
        transports.push(transport);
    }

    let mut handles = Vec::with_capacity(world_size);
    for (instance, transport) in instances.into_iter().zip(&transports) {
        handles.push(stream_process(instance, transport)?);
    }
    let reports: Vec<RunReport> = handles.iter_mut().map(|h| h.join().clone()).collect();
    fabric.close();

    Ok(RunOutcome {
        records: factory.collector.take_sorted(),
        reports,
        logs: factory.logbook.take_all(),
        events_generated: factory.stats.events_emitted.load(Ordering::Relaxed),
        max_schedule_lag_ms: factory.stats.max_schedule_lag_ms.load(Ordering::Relaxed),
    })
}

fn collection_tag(from_rank: usize) -> ChannelTag {
    ChannelTag::new(
        from_rank as u8,
        COLLECTOR_OP_ID,
        0,
        COLLECTOR_OP_ID,
    )
}

fn encode_record(r: &WindowResultRecord) -> Event {
    let mut payload = Vec::with_capacity(16);
    payload.extend_from_slice(&r.window_id.to_le_bytes());
    payload.extend_from_slice(&r.release_ms.to_le_bytes());
    Event::with_payload(r.key, r.value, r.event_time_ms, payload)
}

fn decode_record(e: &Event) -> Option<WindowResultRecord> {
    if e.payload.len() != 16 {
        return None;
    }
    let window_id = u64::from_le_bytes(e.payload[0..8].try_into().ok()?);
    let release_ms = u64::from_le_bytes(e.payload[8..16].try_into().ok()?);
    Some(WindowResultRecord {
        window_id,
        key: e.key,
        value: e.value,
        event_time_ms: e.event_time,
        release_ms,
        latency_ms: release_ms as i64 - e.event_time as i64,
    })
}

/// Runs one rank of a socket deployment. After the dataflow terminates,
/// non-zero ranks ship their sink records to rank 0 over a reserved
/// channel, so rank 0's outcome holds the whole deployment's results (the
/// single results file is written from there).
pub fn run_socket_rank(
    topology: &Topology,
    rank: usize,
    binding: SocketBinding,
    config: &TransportConfig,
    options: &EngineOptions,
) -> Result<RunOutcome, HarnessError> {
    let world_size = config.world_size;
    let transport: SharedTransport = binding.establish(rank, config)?;
    let factory = BenchFactory::new(world_size);

    let instance = build_dataflow(topology, rank, &transport, &factory, options.dataflow())?;
    let mut handle = stream_process(instance, &transport)?;
    let report = handle.join().clone();

    let mut records = factory.collector.take_sorted();
    let mut events_generated = factory.stats.events_emitted.load(Ordering::Relaxed);
    if world_size > 1 {
        if rank == 0 {
            // Generous bound so a crashed peer fails the run instead of
            // wedging it.
            let collect_timeout = std::time::Duration::from_secs(60);
            for peer in 1..world_size {
                let tag = collection_tag(peer);
                let rx = transport.register_receiver(tag)?;
                loop {
                    let msg = rx.recv_timeout(collect_timeout)?;
                    match msg.kind {
                        MessageKind::Data => {
                            records.extend(msg.events.iter().filter_map(decode_record));
                        }
                        // The peer's generator total rides a marker.
                        MessageKind::WindowMarker => events_generated += msg.window_id,
                        MessageKind::Terminate => break,
                    }
                }
            }
            records.sort_by_key(WindowResultRecord::sort_key);
        } else {
            let tag = collection_tag(rank);
            for chunk in records.chunks(512) {
                let events = chunk.iter().map(encode_record).collect();
                transport.send(0, tag, crate::message::Message::data(tag, events))?;
            }
            transport.send(
                0,
                tag,
                crate::message::Message::window_marker(tag, events_generated),
            )?;
            transport.send(0, tag, crate::message::Message::terminate(tag))?;
            records.clear();
        }
    }
    transport.close();

    Ok(RunOutcome {
        records,
        reports: vec![report],
        logs: factory.logbook.take_all(),
        events_generated,
        max_schedule_lag_ms: factory.stats.max_schedule_lag_ms.load(Ordering::Relaxed),
    })
}

/// Test and single-host helper: runs a whole socket deployment with one
/// thread per rank over ephemeral localhost ports. Returns rank 0's
/// outcome (which carries all records) plus every rank's reports.
pub fn run_socket_world(
    topology: &Topology,
    world_size: usize,
    options: &EngineOptions,
) -> Result<RunOutcome, HarnessError> {
    let (bindings, config) =
        crate::transport::socket::bind_local_world(world_size, options.queue_capacity)?;
    let mut threads = Vec::new();
    for (rank, binding) in bindings.into_iter().enumerate() {
        let topology = topology.clone();
        let config = config.clone();
        let options = *options;
        threads.push(std::thread::spawn(move || {
            run_socket_rank(&topology, rank, binding, &config, &options)
        }));
    }
    let mut outcomes = Vec::new();
    for t in threads {
        outcomes.push(t.join().expect("rank thread panicked")?);
    }
    // Rank 0's outcome already folds the peers' generator totals in.
    let mut merged = outcomes.remove(0);
    for other in outcomes {
        merged.reports.extend(other.reports);
        merged
            .logs
            .iter_mut()
            .zip(other.logs)
            .for_each(|(mine, theirs)| {
                if mine.is_empty() {
                    *mine = theirs;
                }
            });
        merged.max_schedule_lag_ms = merged.max_schedule_lag_ms.max(other.max_schedule_lag_ms);
    }
    Ok(merged)
}

//! Building a dataflow instance at one rank and running it.
//!
//! `build_dataflow` allocates every channel endpoint of every operator —
//! `indegree * world_size` incoming and `outdegree * world_size` outgoing
//! per vertex — computes their tags, claims the incoming tags on the
//! transport, and wires same-rank pipelining shortcuts. `stream_process`
//! then spawns the listener/processor/sender thread triad per channel (an
//! ingestion thread for sources) and hands back a joinable run handle.

use crate::message::Message;
use crate::metrics::{MetricsSnapshot, VertexMetrics};
use crate::runtime::operator::{EndpointId, Router, VertexBehavior};
use crate::runtime::topology::{OperatorDescriptor, Topology, TopologyError};
use crate::runtime::vertex::{
    ingestion_loop, listening_loop, processing_loop, sending_loop, CloseBarrier, InEndpointPlan,
    OutTargetPlan, VertexBehaviorPlan, VertexOutputs, VertexPlan,
};
use crate::tag::ChannelTag;
use crate::transport::{SharedTransport, TransportError};
use crossbeam_channel::{bounded, Sender};
use parking_lot::Mutex;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;
use std::thread;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct DataflowOptions {
    /// Capacity of each inter-thread message queue.
    pub queue_capacity: usize,
    /// Events buffered per outgoing slot before a source flushes a batch.
    pub batch_max: usize,
}

impl Default for DataflowOptions {
    fn default() -> Self {
        DataflowOptions {
            queue_capacity: 1024,
            batch_max: 128,
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("rank {rank} out of range for world size {world_size}")]
    RankOutOfRange { rank: usize, world_size: usize },
    #[error("operator instantiation failed for op {op}: {reason}")]
    Factory { op: u8, reason: String },
}

/// Everything an operator factory may need to instantiate one vertex.
pub struct VertexCtx {
    pub rank: usize,
    pub world_size: usize,
    pub router: Router,
    pub in_endpoints: usize,
    pub pipelined: bool,
    pub metrics: Arc<VertexMetrics>,
}

/// Instantiates operator behavior for each descriptor of a topology.
pub trait VertexFactory {
    fn make(
        &self,
        descriptor: &OperatorDescriptor,
        ctx: &VertexCtx,
    ) -> Result<VertexBehavior, BuildError>;
}

/// A fully wired (but not yet running) dataflow at one rank.
pub struct DataflowInstance {
    rank: usize,
    world_size: usize,
    plans: Vec<VertexPlan>,
}

pub fn build_dataflow(
    topology: &Topology,
    rank: usize,
    transport: &SharedTransport,
    factory: &dyn VertexFactory,
    options: DataflowOptions,
) -> Result<DataflowInstance, BuildError> {
    let world_size = transport.world_size();
    if world_size > crate::transport::MAX_WORLD_SIZE {
        return Err(TopologyError::WorldTooLarge(world_size).into());
    }
    if rank >= world_size {
        return Err(BuildError::RankOutOfRange { rank, world_size });
    }

    // Pass 1: one bounded incoming queue per (operator, predecessor, source
    // rank); pipelining wiring below needs the producer handles up front.
    type InQueue = (Sender<Message>, crossbeam_channel::Receiver<Message>);
    let mut in_queues: HashMap<u8, Vec<InQueue>> = HashMap::new();
    for op in topology.operators() {
        let endpoints = op.indegree() * world_size;
        in_queues.insert(
            op.op_id,
            (0..endpoints).map(|_| bounded(options.queue_capacity)).collect(),
        );
    }

    let pred_index_in = |succ: &OperatorDescriptor, pred_id: u8| -> usize {
        succ.predecessors
            .iter()
            .position(|&p| p == pred_id)
            .expect("validated topology edge")
    };

    let mut plans = Vec::with_capacity(topology.operator_count());
    for op in topology.operators() {
        let pipelined = topology.effective_pipelined(op, world_size);
        let metrics = Arc::new(VertexMetrics::default());

        let mut out_targets = Vec::with_capacity(op.outdegree() * world_size);
        for &succ_id in &op.successors {
            let succ = topology.get(succ_id).expect("validated topology edge");
            let succ_pred_idx = pred_index_in(succ, op.op_id);
            for dest in 0..world_size {
                let tag = ChannelTag::try_new(rank, op.op_id as usize, dest, succ_id as usize)
                    .map_err(|e| BuildError::Factory {
                        op: op.op_id,
                        reason: e.to_string(),
                    })?;
                if pipelined && dest == rank {
                    let flat = succ_pred_idx * world_size + rank;
                    let downstream_tx = in_queues[&succ_id][flat].0.clone();
                    out_targets.push(OutTargetPlan::Pipeline { tag, downstream_tx });
                } else {
                    let (queue_tx, queue_rx) = bounded(options.queue_capacity);
                    out_targets.push(OutTargetPlan::Transport {
                        tag,
                        dest,
                        queue_tx,
                        queue_rx,
                    });
                }
            }
        }

        let mut in_endpoints = Vec::with_capacity(op.indegree() * world_size);
        let own_queues = in_queues.get(&op.op_id).expect("pass 1 created queues");
        for (pred_idx, &pred_id) in op.predecessors.iter().enumerate() {
            let pred = topology.get(pred_id).expect("validated topology edge");
            let pred_pipelined = topology.effective_pipelined(pred, world_size);
            for src in 0..world_size {
                let flat = pred_idx * world_size + src;
                let tag = ChannelTag::try_new(src, pred_id as usize, rank, op.op_id as usize)
                    .map_err(|e| BuildError::Factory {
                        op: op.op_id,
                        reason: e.to_string(),
                    })?;
                // A same-rank channel from a pipelined predecessor never
                // touches the transport; the queue is fed directly.
                let transport_rx = if pred_pipelined && src == rank {
                    None
                } else {
                    Some(transport.register_receiver(tag)?)
                };
                let (queue_tx, queue_rx) = own_queues[flat].clone();
                in_endpoints.push(InEndpointPlan {
                    endpoint: EndpointId {
                        flat,
                        predecessor_index: pred_idx,
                        source_rank: src,
                    },
                    queue_tx,
                    queue_rx,
                    transport_rx,
                });
            }
        }

        let router = Router::new(
            world_size,
            rank,
            op.outdegree().max(1),
            op.routing,
            pipelined,
        );
        let ctx = VertexCtx {
            rank,
            world_size,
            router: router.clone(),
            in_endpoints: op.indegree() * world_size,
            pipelined,
            metrics: metrics.clone(),
        };
        let behavior = match factory.make(op, &ctx)? {
            VertexBehavior::Source(src) => VertexBehaviorPlan::Source(src),
            VertexBehavior::Operator(inner) => VertexBehaviorPlan::Operator(Arc::from(inner)),
        };

        plans.push(VertexPlan {
            op_id: op.op_id,
            name: format!("r{rank}.{}{}", op.kind.name(), op.op_id),
            behavior,
            router,
            in_endpoints,
            out_targets,
            metrics,
            batch_max: options.batch_max,
        });
    }

    Ok(DataflowInstance {
        rank,
        world_size,
        plans,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ThreadCounts {
    pub listeners: usize,
    pub processors: usize,
    pub senders: usize,
    pub ingestion: usize,
}

impl ThreadCounts {
    pub fn total(&self) -> usize {
        self.listeners + self.processors + self.senders + self.ingestion
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexReport {
    pub op_id: u8,
    pub name: String,
    pub threads: ThreadCounts,
    pub metrics: MetricsSnapshot,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub rank: usize,
    pub vertices: Vec<VertexReport>,
    /// DATA messages found unprocessed in any queue after termination.
    pub leftover_data_messages: u64,
}

impl RunReport {
    pub fn clean(&self) -> bool {
        self.leftover_data_messages == 0
            && self.vertices.iter().all(|v| v.metrics.op_errors == 0)
    }

    pub fn vertex(&self, op_id: u8) -> Option<&VertexReport> {
        self.vertices.iter().find(|v| v.op_id == op_id)
    }
}

struct VertexInfo {
    op_id: u8,
    name: String,
    metrics: Arc<VertexMetrics>,
    threads: ThreadCounts,
}

/// A running dataflow; joining it is idempotent.
pub struct RunHandle {
    rank: usize,
    threads: Vec<thread::JoinHandle<u64>>,
    vertices: Vec<VertexInfo>,
    report: Option<RunReport>,
}

impl RunHandle {
    /// Blocks until every spawned thread exits, then returns the report.
    /// Returns immediately on a finished handle.
    pub fn join(&mut self) -> &RunReport {
        if self.report.is_none() {
            let mut leftover = 0;
            for handle in self.threads.drain(..) {
                leftover += handle.join().unwrap_or(0);
            }
            let vertices = self
                .vertices
                .iter()
                .map(|v| VertexReport {
                    op_id: v.op_id,
                    name: v.name.clone(),
                    threads: v.threads,
                    metrics: v.metrics.snapshot(),
                })
                .collect();
            self.report = Some(RunReport {
                rank: self.rank,
                vertices,
                leftover_data_messages: leftover,
            });
        }
        self.report.as_ref().expect("report just built")
    }
}

/// Spawns all vertex threads of a built instance.
pub fn stream_process(
    instance: DataflowInstance,
    transport: &SharedTransport,
) -> std::io::Result<RunHandle> {
    let mut threads = Vec::new();
    let mut vertices = Vec::new();

    for plan in instance.plans {
        let VertexPlan {
            op_id,
            name,
            behavior,
            router,
            in_endpoints,
            out_targets,
            metrics,
            batch_max,
        } = plan;

        let mut counts = ThreadCounts::default();

        // Fan-out table with sender threads behind transport-bound slots.
        let mut targets = Vec::with_capacity(out_targets.len());
        let mut sender_specs = Vec::new();
        for target in out_targets {
            match target {
                OutTargetPlan::Transport {
                    tag,
                    dest,
                    queue_tx,
                    queue_rx,
                } => {
                    targets.push((tag, queue_tx, false));
                    sender_specs.push((tag, dest, queue_rx));
                }
                OutTargetPlan::Pipeline { tag, downstream_tx } => {
                    targets.push((tag, downstream_tx, true));
                }
            }
        }
        let outputs = Arc::new(VertexOutputs::from_parts(targets, metrics.clone()));

        for (tag, dest, queue_rx) in sender_specs {
            let transport = transport.clone();
            let metrics = metrics.clone();
            let name = name.clone();
            threads.push(
                thread::Builder::new()
                    .name(format!("{name}.snd.{tag}"))
                    .spawn(move || sending_loop(queue_rx, tag, dest, transport, metrics, name))?,
            );
            counts.senders += 1;
        }

        match behavior {
            VertexBehaviorPlan::Source(source) => {
                let outputs = outputs.clone();
                let metrics_c = metrics.clone();
                let name_c = name.clone();
                threads.push(
                    thread::Builder::new()
                        .name(format!("{name}.ingest"))
                        .spawn(move || {
                            ingestion_loop(source, router, outputs, batch_max, metrics_c, name_c)
                        })?,
                );
                counts.ingestion += 1;
            }
            VertexBehaviorPlan::Operator(operator) => {
                let barrier = Arc::new(Mutex::new(CloseBarrier::new(in_endpoints.len())));
                for ep in in_endpoints {
                    if let Some(receiver) = ep.transport_rx {
                        let queue_tx = ep.queue_tx.clone();
                        threads.push(
                            thread::Builder::new()
                                .name(format!("{name}.lst.{}", ep.endpoint.flat))
                                .spawn(move || listening_loop(receiver, queue_tx))?,
                        );
                        counts.listeners += 1;
                    }
                    let operator = operator.clone();
                    let outputs = outputs.clone();
                    let barrier = barrier.clone();
                    let metrics_c = metrics.clone();
                    let name_c = name.clone();
                    let endpoint = ep.endpoint;
                    let queue_rx = ep.queue_rx;
                    threads.push(
                        thread::Builder::new()
                            .name(format!("{name}.prc.{}", endpoint.flat))
                            .spawn(move || {
                                processing_loop(
                                    operator, endpoint, queue_rx, outputs, barrier, metrics_c,
                                    name_c,
                                )
                            })?,
                    );
                    counts.processors += 1;
                }
            }
        }

        vertices.push(VertexInfo {
            op_id,
            name,
            metrics,
            threads: counts,
        });
    }

    Ok(RunHandle {
        rank: instance.rank,
        threads,
        vertices,
        report: None,
    })
}

impl DataflowInstance {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    /// Incoming and outgoing endpoint counts per operator, for inspection.
    pub fn endpoint_counts(&self) -> Vec<(u8, usize, usize)> {
        self.plans
            .iter()
            .map(|p| (p.op_id, p.in_endpoints.len(), p.out_targets.len()))
            .collect()
    }
}


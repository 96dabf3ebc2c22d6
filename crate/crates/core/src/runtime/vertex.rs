//! Per-vertex channel wiring and the listener / processor / sender loops.
//!
//! Each vertex at each rank runs one listening thread and one processing
//! thread per incoming channel and one sending thread per outgoing channel;
//! sources run a single ingestion thread instead of listeners and
//! processors. Queues between the loops are bounded and block on both ends,
//! which is how back-pressure propagates from a slow consumer all the way
//! into the generators.
//!
//! Termination is a barrier: a vertex forwards TERMINATE downstream only
//! after every one of its incoming channels delivered TERMINATE, so no DATA
//! ever trails a TERMINATE on any channel. The barrier mutex is held across
//! the closing step's flush, which keeps a concurrent closer from
//! publishing the terminate before earlier closers finished flushing.

use crate::message::{Message, MessageKind};
use crate::metrics::VertexMetrics;
use crate::runtime::operator::{
    EndpointId, OpError, Operator, Source, SourceContext, SourceOutput, StepOutputs,
};
use crate::runtime::operator::Router;
use crate::tag::ChannelTag;
use crate::transport::{SharedTransport, TagReceiver};
use crossbeam_channel::{Receiver, Sender};
use parking_lot::Mutex;
use std::sync::Arc;

pub(crate) struct InEndpointPlan {
    pub endpoint: EndpointId,
    pub queue_tx: Sender<Message>,
    pub queue_rx: Receiver<Message>,
    /// None when the channel is fed exclusively by same-rank pipelining;
    /// nothing ever transits the transport for it.
    pub transport_rx: Option<TagReceiver>,
}

pub(crate) enum OutTargetPlan {
    /// Regular path: processor -> queue -> sender thread -> transport.
    Transport {
        tag: ChannelTag,
        dest: usize,
        queue_tx: Sender<Message>,
        queue_rx: Receiver<Message>,
    },
    /// Pipelining shortcut: processor pushes straight into the same-rank
    /// successor's incoming queue.
    Pipeline {
        tag: ChannelTag,
        downstream_tx: Sender<Message>,
    },
}

pub(crate) enum VertexBehaviorPlan {
    Source(Box<dyn Source>),
    Operator(Arc<dyn Operator>),
}

pub(crate) struct VertexPlan {
    pub op_id: u8,
    pub name: String,
    pub behavior: VertexBehaviorPlan,
    pub router: Router,
    pub in_endpoints: Vec<InEndpointPlan>,
    pub out_targets: Vec<OutTargetPlan>,
    pub metrics: Arc<VertexMetrics>,
    pub batch_max: usize,
}

/// Immutable fan-out table shared by a vertex's processing threads.
pub(crate) struct VertexOutputs {
    targets: Vec<RuntimeTarget>,
    metrics: Arc<VertexMetrics>,
}

struct RuntimeTarget {
    tag: ChannelTag,
    tx: Sender<Message>,
    pipeline: bool,
}

/// A downstream queue disconnected while this vertex still had output for
/// it; the owning loop exits.
pub(crate) struct Disconnected;

impl VertexOutputs {
    pub(crate) fn from_parts(
        targets: Vec<(ChannelTag, Sender<Message>, bool)>,
        metrics: Arc<VertexMetrics>,
    ) -> Self {
        VertexOutputs {
            targets: targets
                .into_iter()
                .map(|(tag, tx, pipeline)| RuntimeTarget { tag, tx, pipeline })
                .collect(),
            metrics,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.targets.len()
    }

    fn push(&self, slot: usize, msg: Message) -> Result<(), Disconnected> {
        let target = &self.targets[slot];
        if target.pipeline {
            self.metrics
                .pipeline_transfers
                .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        target.tx.send(msg).map_err(|_| Disconnected)
    }

    pub fn push_data(&self, slot: usize, events: Vec<crate::event::Event>) -> Result<(), Disconnected> {
        self.metrics
            .events_out
            .fetch_add(events.len() as u64, std::sync::atomic::Ordering::Relaxed);
        let tag = self.targets[slot].tag;
        self.push(slot, Message::data(tag, events))
    }

    pub fn push_marker_all(&self, window_id: u64) -> Result<(), Disconnected> {
        for slot in 0..self.targets.len() {
            let tag = self.targets[slot].tag;
            self.push(slot, Message::window_marker(tag, window_id))?;
        }
        Ok(())
    }

    pub fn push_terminate_all(&self) -> Result<(), Disconnected> {
        for slot in 0..self.targets.len() {
            let tag = self.targets[slot].tag;
            self.push(slot, Message::terminate(tag))?;
        }
        Ok(())
    }

    /// Drains one step's outputs in channel-safe order: data batches first,
    /// then markers.
    pub fn flush_step(&self, out: &mut StepOutputs) -> Result<(), Disconnected> {
        let (slots, markers) = out.take();
        for (slot, events) in slots.into_iter().enumerate() {
            if !events.is_empty() {
                self.push_data(slot, events)?;
            }
        }
        for window_id in markers {
            self.push_marker_all(window_id)?;
        }
        Ok(())
    }
}

impl SourceOutput for VertexOutputs {
    fn push_events(
        &self,
        slot: usize,
        events: Vec<crate::event::Event>,
    ) -> Result<(), OpError> {
        self.push_data(slot, events)
            .map_err(|_| OpError("downstream queue disconnected".into()))
    }

    fn push_marker_all(&self, window_id: u64) -> Result<(), OpError> {
        VertexOutputs::push_marker_all(self, window_id)
            .map_err(|_| OpError("downstream queue disconnected".into()))
    }
}

/// Tracks which incoming channels have terminated.
pub(crate) struct CloseBarrier {
    closed: Vec<bool>,
    remaining: usize,
}

impl CloseBarrier {
    pub fn new(endpoints: usize) -> Self {
        CloseBarrier {
            closed: vec![false; endpoints],
            remaining: endpoints,
        }
    }

    /// Returns `(was_new, is_last)`.
    pub fn close(&mut self, flat: usize) -> (bool, bool) {
        if self.closed[flat] {
            return (false, self.remaining == 0);
        }
        self.closed[flat] = true;
        self.remaining -= 1;
        (true, self.remaining == 0)
    }
}

pub(crate) fn listening_loop(receiver: TagReceiver, queue_tx: Sender<Message>) -> u64 {
    // A recv error means the transport closed while blocked: clean exit.
    while let Ok(msg) = receiver.recv() {
        let is_terminate = msg.kind == MessageKind::Terminate;
        if queue_tx.send(msg).is_err() {
            break;
        }
        if is_terminate {
            break;
        }
    }
    0
}

/// A panic inside an operator counts as a processing error; letting it
/// kill the thread would wedge every producer blocked on this queue.
fn guarded(step: impl FnOnce() -> Result<(), OpError>) -> Result<(), OpError> {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(step)) {
        Ok(result) => result,
        Err(panic) => {
            let reason = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "operator panicked".into());
            Err(OpError(format!("panic: {reason}")))
        }
    }
}

pub(crate) fn processing_loop(
    operator: Arc<dyn Operator>,
    endpoint: EndpointId,
    queue_rx: Receiver<Message>,
    outputs: Arc<VertexOutputs>,
    barrier: Arc<Mutex<CloseBarrier>>,
    metrics: Arc<VertexMetrics>,
    name: String,
) -> u64 {
    use std::sync::atomic::Ordering;
    let mut out = StepOutputs::new(outputs.slot_count());
    while let Ok(msg) = queue_rx.recv() {
        match msg.kind {
            MessageKind::Data => {
                metrics.messages_in.fetch_add(1, Ordering::Relaxed);
                metrics
                    .events_in
                    .fetch_add(msg.events.len() as u64, Ordering::Relaxed);
                if let Err(err) = guarded(|| operator.on_data(endpoint, msg.events, &mut out)) {
                    metrics.op_errors.fetch_add(1, Ordering::Relaxed);
                    log::error!("{name}: processing error: {err}");
                }
                if outputs.flush_step(&mut out).is_err() {
                    break;
                }
            }
            MessageKind::WindowMarker => {
                metrics.markers_in.fetch_add(1, Ordering::Relaxed);
                if let Err(err) =
                    guarded(|| operator.on_marker(endpoint, msg.window_id, &mut out))
                {
                    metrics.op_errors.fetch_add(1, Ordering::Relaxed);
                    log::error!("{name}: marker error: {err}");
                }
                if outputs.flush_step(&mut out).is_err() {
                    break;
                }
            }
            MessageKind::Terminate => {
                // Hold the barrier across the closing flush so the last
                // closer's TERMINATE cannot overtake an earlier closer's
                // released output.
                let mut guard = barrier.lock();
                let (was_new, is_last) = guard.close(endpoint.flat);
                if !was_new {
                    metrics.op_errors.fetch_add(1, Ordering::Relaxed);
                    log::error!("{name}: duplicate TERMINATE on endpoint {}", endpoint.flat);
                    break;
                }
                if let Err(err) = guarded(|| operator.on_endpoint_closed(endpoint, &mut out)) {
                    metrics.op_errors.fetch_add(1, Ordering::Relaxed);
                    log::error!("{name}: close error: {err}");
                }
                let flushed = outputs.flush_step(&mut out);
                if is_last && flushed.is_ok() {
                    let _ = outputs.push_terminate_all();
                }
                drop(guard);
                break;
            }
        }
    }
    // After TERMINATE nothing may remain; report unprocessed DATA.
    let mut leftover = 0;
    while let Ok(msg) = queue_rx.try_recv() {
        if msg.kind == MessageKind::Data {
            leftover += 1;
        }
    }
    leftover
}

pub(crate) fn sending_loop(
    queue_rx: Receiver<Message>,
    tag: ChannelTag,
    dest: usize,
    transport: SharedTransport,
    metrics: Arc<VertexMetrics>,
    name: String,
) -> u64 {
    use std::sync::atomic::Ordering;
    while let Ok(msg) = queue_rx.recv() {
        let is_terminate = msg.kind == MessageKind::Terminate;
        match transport.send(dest, tag, msg) {
            Ok(()) => {
                metrics.transport_sends.fetch_add(1, Ordering::Relaxed);
            }
            Err(err) => {
                log::error!("{name}: send on {tag} failed: {err}");
                break;
            }
        }
        if is_terminate {
            break;
        }
    }
    0
}

pub(crate) fn ingestion_loop(
    mut source: Box<dyn Source>,
    router: Router,
    outputs: Arc<VertexOutputs>,
    batch_max: usize,
    metrics: Arc<VertexMetrics>,
    name: String,
) -> u64 {
    use std::sync::atomic::Ordering;
    let mut ctx = SourceContext::new(outputs.as_ref(), &router, batch_max);
    match guarded(|| source.run(&mut ctx)) {
        Ok(()) => {
            if let Err(err) = ctx.flush_all() {
                log::error!("{name}: final flush failed: {err}");
            }
        }
        Err(err) => {
            metrics.op_errors.fetch_add(1, Ordering::Relaxed);
            log::error!("{name}: source failed: {err}");
        }
    }
    // Terminate must flow even after a failed source, or downstream
    // vertices would wait forever.
    let _ = outputs.push_terminate_all();
    0
}

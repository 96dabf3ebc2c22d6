//! The operator-facing runtime surface: routing, step outputs, and the
//! traits implemented by operators and sources.

use crate::event::Event;
use crate::runtime::topology::RoutingStrategy;
use thiserror::Error;

/// A processing failure inside one operator step. Counted per vertex and
/// logged; the processing loop keeps running.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct OpError(pub String);

/// Identifies one incoming channel of a vertex: flat index
/// `predecessor_index * world_size + source_rank`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointId {
    pub flat: usize,
    pub predecessor_index: usize,
    pub source_rank: usize,
}

/// Computes the outgoing slot for each produced event. One slot exists per
/// (successor, rank) pair: `successor_index * world_size + rank_component`.
/// When the owning operator is pipelined the rank component is always the
/// local rank.
#[derive(Debug, Clone)]
pub struct Router {
    world_size: usize,
    rank: usize,
    outdegree: usize,
    strategy: RoutingStrategy,
    pipelined: bool,
}

impl Router {
    pub fn new(
        world_size: usize,
        rank: usize,
        outdegree: usize,
        strategy: RoutingStrategy,
        pipelined: bool,
    ) -> Self {
        Router {
            world_size,
            rank,
            outdegree,
            strategy,
            pipelined,
        }
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn out_slots(&self) -> usize {
        self.outdegree * self.world_size
    }

    fn rank_component(&self, event: &Event) -> usize {
        if self.pipelined {
            return self.rank;
        }
        match &self.strategy {
            RoutingStrategy::ShardByValue => (event.value % self.world_size as u64) as usize,
            RoutingStrategy::ShardByKey(sel) => {
                (sel.key_of(event) % self.world_size as u64) as usize
            }
            RoutingStrategy::ShardByWindow { window_ms } => {
                ((event.event_time / window_ms) % self.world_size as u64) as usize
            }
            RoutingStrategy::LocalOnly => self.rank,
        }
    }

    /// Slot for ops with a single successor edge.
    pub fn slot(&self, event: &Event) -> usize {
        debug_assert_eq!(self.outdegree, 1);
        self.rank_component(event)
    }

    /// Split routing: `condition_index * world_size + value % world_size`
    /// (local rank instead of the value shard when pipelined).
    pub fn split_slot(&self, condition_index: usize, event: &Event) -> usize {
        let shard = if self.pipelined {
            self.rank
        } else {
            (event.value % self.world_size as u64) as usize
        };
        condition_index * self.world_size + shard
    }
}

/// Outputs of one processing step: per-slot event batches plus window
/// markers to broadcast on every outgoing channel. The runtime flushes the
/// data first (at most one DATA message per slot per step), then the
/// markers in emission order.
#[derive(Debug)]
pub struct StepOutputs {
    slots: Vec<Vec<Event>>,
    markers: Vec<u64>,
}

impl StepOutputs {
    pub fn new(out_slots: usize) -> Self {
        StepOutputs {
            slots: (0..out_slots).map(|_| Vec::new()).collect(),
            markers: Vec::new(),
        }
    }

    pub fn emit(&mut self, slot: usize, event: Event) {
        self.slots[slot].push(event);
    }

    pub fn broadcast_marker(&mut self, window_id: u64) {
        self.markers.push(window_id);
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty() && self.slots.iter().all(Vec::is_empty)
    }

    pub(crate) fn take(&mut self) -> (Vec<Vec<Event>>, Vec<u64>) {
        let slots = self
            .slots
            .iter_mut()
            .map(std::mem::take)
            .collect::<Vec<_>>();
        let markers = std::mem::take(&mut self.markers);
        (slots, markers)
    }

    /// Events pending in one slot; used when driving operators directly.
    pub fn slot_events(&self, slot: usize) -> &[Event] {
        &self.slots[slot]
    }

    /// Markers pending broadcast, in emission order.
    pub fn markers(&self) -> &[u64] {
        &self.markers
    }
}

/// A dataflow operator instance at one rank. Calls may come from several
/// processing threads concurrently (one per incoming channel); operators
/// guard any shared state themselves.
pub trait Operator: Send + Sync {
    fn on_data(
        &self,
        input: EndpointId,
        events: Vec<Event>,
        out: &mut StepOutputs,
    ) -> Result<(), OpError>;

    /// The channel behind `input` carries no further events for `window`.
    fn on_marker(&self, input: EndpointId, window: u64, out: &mut StepOutputs)
        -> Result<(), OpError>;

    /// The channel behind `input` terminated. A closed channel counts as
    /// marked for every window, so this may complete pending windows.
    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError>;
}

/// Sink for events produced by a source's ingestion thread. Events are
/// batched per slot; a batch is flushed when it reaches the configured
/// size, when the source emits a marker, and at the end of the stream.
pub trait SourceOutput {
    fn push_events(&self, slot: usize, events: Vec<Event>) -> Result<(), OpError>;
    fn push_marker_all(&self, window_id: u64) -> Result<(), OpError>;
}

pub struct SourceContext<'a> {
    output: &'a dyn SourceOutput,
    router: &'a Router,
    batch_max: usize,
    buffers: Vec<Vec<Event>>,
    events_emitted: u64,
}

impl<'a> SourceContext<'a> {
    pub fn new(output: &'a dyn SourceOutput, router: &'a Router, batch_max: usize) -> Self {
        SourceContext {
            output,
            router,
            batch_max: batch_max.max(1),
            buffers: (0..router.out_slots()).map(|_| Vec::new()).collect(),
            events_emitted: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.router.rank()
    }

    pub fn world_size(&self) -> usize {
        self.router.world_size()
    }

    /// Routes and buffers one event, flushing its slot at the batch bound.
    pub fn emit(&mut self, event: Event) -> Result<(), OpError> {
        let slot = self.router.slot(&event);
        self.buffers[slot].push(event);
        self.events_emitted += 1;
        if self.buffers[slot].len() >= self.batch_max {
            let batch = std::mem::take(&mut self.buffers[slot]);
            self.output.push_events(slot, batch)?;
        }
        Ok(())
    }

    pub fn flush_all(&mut self) -> Result<(), OpError> {
        for slot in 0..self.buffers.len() {
            if !self.buffers[slot].is_empty() {
                let batch = std::mem::take(&mut self.buffers[slot]);
                self.output.push_events(slot, batch)?;
            }
        }
        Ok(())
    }

    /// Flushes all pending data, then announces on every outgoing channel
    /// that `window_id` is complete on this source instance.
    pub fn broadcast_marker(&mut self, window_id: u64) -> Result<(), OpError> {
        self.flush_all()?;
        self.output.push_marker_all(window_id)
    }

    pub fn events_emitted(&self) -> u64 {
        self.events_emitted
    }
}

/// A stream origin. `run` drives the whole life of one source instance;
/// the runtime emits the terminate signal after it returns.
pub trait Source: Send {
    fn run(&mut self, ctx: &mut SourceContext<'_>) -> Result<(), OpError>;
}

/// What the factory instantiates for each vertex of the topology.
pub enum VertexBehavior {
    Source(Box<dyn Source>),
    Operator(Box<dyn Operator>),
}

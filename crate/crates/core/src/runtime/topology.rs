//! Declarative dataflow topologies.
//!
//! A topology is a multi-rooted DAG of operator descriptors. Every rank
//! instantiates the whole topology; edges fan out over all ranks, so an
//! operator with indegree `d` owns `d * world_size` incoming channels and
//! outdegree `o` owns `o * world_size` outgoing channels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Operator ids must leave room for one reserved id used by the result
/// collection channel in multi-process deployments.
pub const MAX_OP_ID: u8 = 254;
pub const COLLECTOR_OP_ID: u8 = 255;

/// Value transformation applied by a map operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapFunction {
    Identity,
    MulConst(u64),
    AddConst(u64),
}

impl MapFunction {
    pub fn apply(&self, value: u64) -> u64 {
        match self {
            MapFunction::Identity => value,
            MapFunction::MulConst(c) => value.wrapping_mul(*c),
            MapFunction::AddConst(c) => value.wrapping_add(*c),
        }
    }
}

/// Event predicate used by filters and split conditions.
///
/// `EventTypeIs` reads the type byte that generated events carry as the
/// first payload byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Always,
    Never,
    EventTypeIs(u8),
    EventTypeOneOf(u8, u8),
    ValueAtLeast(u64),
}

impl Predicate {
    pub fn matches(&self, event: &crate::event::Event) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Never => false,
            Predicate::EventTypeIs(t) => event.payload.first() == Some(t),
            Predicate::EventTypeOneOf(a, b) => {
                event.payload.first() == Some(a) || event.payload.first() == Some(b)
            }
            Predicate::ValueAtLeast(v) => event.value >= *v,
        }
    }
}

/// Where a static join table comes from. Every rank loads the same table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableSource {
    Inline(Vec<(u64, u64)>),
    /// Two-column `key,value` CSV shared by all ranks.
    Csv(String),
    /// The benchmark ad table: ad `i` maps to campaign `i % num_campaigns`.
    AdsToCampaigns {
        num_campaigns: u64,
        ads_per_campaign: u64,
    },
}

/// Which key a keyed operator (and the routing into it) groups by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeySelector {
    EventKey,
    Constant(u64),
}

impl KeySelector {
    pub fn key_of(&self, event: &crate::event::Event) -> u64 {
        match self {
            KeySelector::EventKey => event.key,
            KeySelector::Constant(k) => *k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggKind {
    Count,
    Sum,
}

/// Stage of a windowed aggregation. `Single` both folds raw events and
/// applies window completeness. `Pre` folds whatever arrives locally and
/// emits per-window partial states routed by window id; `Global` merges
/// those partials and applies completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggStage {
    Single,
    Pre,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateParams {
    pub function: AggKind,
    pub key: KeySelector,
    pub window_ms: u64,
    pub stage: AggStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinFunction {
    /// `floor(10^6 * left / right)`, dropping pairs with a zero right side.
    RatioMicros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowJoinParams {
    pub window_ms: u64,
    pub function: JoinFunction,
}

/// In-memory rate-controlled generator configuration. The total `rate` is
/// split evenly over all generator instances (one per rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub rate: u64,
    pub duration_s: u64,
    pub window_ms: u64,
    pub seed: u64,
    pub avg_event_bytes: usize,
    pub num_campaigns: u64,
    pub ads_per_campaign: u64,
    /// When false the generator skips pacing sleeps and emits as fast as
    /// possible; event times still follow the nominal schedule.
    pub paced: bool,
    pub capture_log: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            rate: 10_000,
            duration_s: 60,
            window_ms: 10_000,
            seed: 1,
            avg_event_bytes: 136,
            num_campaigns: 100,
            ads_per_campaign: 10,
            paced: true,
            capture_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub key: u64,
    pub value: u64,
    pub event_time: u64,
    /// Optional event type byte, placed as the first payload byte.
    pub etype: Option<u8>,
}

/// A source that replays a fixed per-rank script; used by tests to place
/// events on chosen ranks deterministically. Scripted sources emit no
/// markers — windows close when the stream terminates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedParams {
    /// `events[rank]` is the script for that rank's instance.
    pub events: Vec<Vec<ScriptedEvent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    Generator(GeneratorParams),
    Scripted(ScriptedParams),
    Map { function: MapFunction },
    Filter { predicate: Predicate },
    Split { conditions: Vec<Predicate> },
    StaticJoin { table: TableSource },
    Aggregate(AggregateParams),
    WindowJoin(WindowJoinParams),
    Sink { window_ms: u64 },
}

impl OperatorKind {
    pub fn is_source(&self) -> bool {
        matches!(self, OperatorKind::Generator(_) | OperatorKind::Scripted(_))
    }

    /// Windowed operators hold per-window state and may never pipeline.
    pub fn is_stateful(&self) -> bool {
        matches!(self, OperatorKind::Aggregate(_) | OperatorKind::WindowJoin(_))
    }

    pub fn is_sink(&self) -> bool {
        matches!(self, OperatorKind::Sink { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Generator(_) => "generator",
            OperatorKind::Scripted(_) => "scripted",
            OperatorKind::Map { .. } => "map",
            OperatorKind::Filter { .. } => "filter",
            OperatorKind::Split { .. } => "split",
            OperatorKind::StaticJoin { .. } => "static_join",
            OperatorKind::Aggregate(p) => match p.stage {
                AggStage::Single => "aggregate",
                AggStage::Pre => "pre_aggregate",
                AggStage::Global => "global_aggregate",
            },
            OperatorKind::WindowJoin(_) => "window_join",
            OperatorKind::Sink { .. } => "sink",
        }
    }
}

/// How an operator routes produced events to the ranks of its successor.
/// Split operators ignore this and use their condition-index formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutingStrategy {
    /// `value % world_size`; pure load balancing, any placement is correct.
    ShardByValue,
    /// `key % world_size`; required by single-stage keyed aggregation.
    ShardByKey(KeySelector),
    /// `window_id % world_size`; routes pre-aggregated partials to the
    /// rank that owns the window.
    ShardByWindow { window_ms: u64 },
    /// Always the local rank.
    LocalOnly,
}

impl RoutingStrategy {
    /// True when the strategy only balances load, so rerouting to the local
    /// rank cannot change any downstream result.
    pub fn placement_free(&self) -> bool {
        matches!(self, RoutingStrategy::ShardByValue | RoutingStrategy::LocalOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub op_id: u8,
    pub kind: OperatorKind,
    pub predecessors: Vec<u8>,
    pub successors: Vec<u8>,
    pub pipelined: bool,
    pub routing: RoutingStrategy,
}

impl OperatorDescriptor {
    pub fn indegree(&self) -> usize {
        self.predecessors.len()
    }

    pub fn outdegree(&self) -> usize {
        self.successors.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate operator id {0}")]
    DuplicateOpId(u8),
    #[error("operator id {0} exceeds the {MAX_OP_ID} limit")]
    OpIdTooLarge(u8),
    #[error("edge {from}->{to} is dangling: {missing} does not exist")]
    DanglingEdge { from: u8, to: u8, missing: u8 },
    #[error("edge {from}->{to} is not mirrored by the other endpoint")]
    UnmirroredEdge { from: u8, to: u8 },
    #[error("topology has a cycle through operator {0}")]
    Cycle(u8),
    #[error("source operator {0} must have indegree 0")]
    SourceWithInputs(u8),
    #[error("non-source operator {0} has no predecessors")]
    Orphan(u8),
    #[error("non-sink operator {0} has no successors")]
    DeadEnd(u8),
    #[error("sink operator {0} must have outdegree 0")]
    SinkWithOutputs(u8),
    #[error("windowed operator {0} cannot be pipelined")]
    PipelinedStateful(u8),
    #[error("sink operator {0} cannot be pipelined")]
    PipelinedSink(u8),
    #[error("windowed operator {0} must have outdegree 1, has {1}")]
    StatefulFanOut(u8, usize),
    #[error("join operator {0} must have exactly 2 predecessors, has {1}")]
    JoinIndegree(u8, usize),
    #[error("split operator {0} must have one condition per successor ({conds} conditions, {succs} successors)", conds = .1, succs = .2)]
    SplitArity(u8, usize, usize),
    #[error("operator {op} routes by a window of {routing_ms} ms but its window is {op_ms} ms")]
    WindowMismatch { op: u8, routing_ms: u64, op_ms: u64 },
    #[error("topology has no source")]
    NoSource,
    #[error("world size {0} exceeds 256")]
    WorldTooLarge(usize),
}

/// The DAG of operator descriptors, validated on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    operators: Vec<OperatorDescriptor>,
}

impl Topology {
    pub fn new(operators: Vec<OperatorDescriptor>) -> Result<Self, TopologyError> {
        let topo = Topology { operators };
        topo.validate()?;
        Ok(topo)
    }

    pub fn operators(&self) -> &[OperatorDescriptor] {
        &self.operators
    }

    /// Total number of operators in the DAG, the sink included.
    pub fn operator_count(&self) -> usize {
        self.operators.len()
    }

    pub fn get(&self, op_id: u8) -> Option<&OperatorDescriptor> {
        self.operators.iter().find(|op| op.op_id == op_id)
    }

    pub fn sources(&self) -> impl Iterator<Item = &OperatorDescriptor> {
        self.operators.iter().filter(|op| op.indegree() == 0)
    }

    pub fn sinks(&self) -> impl Iterator<Item = &OperatorDescriptor> {
        self.operators.iter().filter(|op| op.outdegree() == 0)
    }

    /// Whether pipelining is actually applied to `op` in a deployment of
    /// `world_size` ranks: the flag must be requested, the operator must be
    /// stateless, and rerouting to the local rank must be unable to change
    /// results — which holds for placement-free routing, or trivially when
    /// there is a single rank.
    pub fn effective_pipelined(&self, op: &OperatorDescriptor, world_size: usize) -> bool {
        op.pipelined
            && !op.kind.is_stateful()
            && !op.kind.is_sink()
            && (world_size == 1 || op.routing.placement_free())
    }

    fn validate(&self) -> Result<(), TopologyError> {
        use std::collections::{HashMap, HashSet};

        let mut seen = HashSet::new();
        for op in &self.operators {
            if op.op_id > MAX_OP_ID {
                return Err(TopologyError::OpIdTooLarge(op.op_id));
            }
            if !seen.insert(op.op_id) {
                return Err(TopologyError::DuplicateOpId(op.op_id));
            }
        }

        let by_id: HashMap<u8, &OperatorDescriptor> =
            self.operators.iter().map(|op| (op.op_id, op)).collect();

        for op in &self.operators {
            for &succ in &op.successors {
                let other = by_id.get(&succ).ok_or(TopologyError::DanglingEdge {
                    from: op.op_id,
                    to: succ,
                    missing: succ,
                })?;
                if !other.predecessors.contains(&op.op_id) {
                    return Err(TopologyError::UnmirroredEdge {
                        from: op.op_id,
                        to: succ,
                    });
                }
            }
            for &pred in &op.predecessors {
                let other = by_id.get(&pred).ok_or(TopologyError::DanglingEdge {
                    from: pred,
                    to: op.op_id,
                    missing: pred,
                })?;
                if !other.successors.contains(&op.op_id) {
                    return Err(TopologyError::UnmirroredEdge {
                        from: pred,
                        to: op.op_id,
                    });
                }
            }

            if op.kind.is_source() {
                if op.indegree() != 0 {
                    return Err(TopologyError::SourceWithInputs(op.op_id));
                }
            } else if op.indegree() == 0 {
                return Err(TopologyError::Orphan(op.op_id));
            }

            if op.kind.is_sink() {
                if op.outdegree() != 0 {
                    return Err(TopologyError::SinkWithOutputs(op.op_id));
                }
                if op.pipelined {
                    return Err(TopologyError::PipelinedSink(op.op_id));
                }
            } else if op.outdegree() == 0 {
                return Err(TopologyError::DeadEnd(op.op_id));
            }

            if op.kind.is_stateful() {
                if op.pipelined {
                    return Err(TopologyError::PipelinedStateful(op.op_id));
                }
                if op.outdegree() != 1 {
                    return Err(TopologyError::StatefulFanOut(op.op_id, op.outdegree()));
                }
            }

            match &op.kind {
                OperatorKind::WindowJoin(_) if op.indegree() != 2 => {
                    return Err(TopologyError::JoinIndegree(op.op_id, op.indegree()));
                }
                OperatorKind::Split { conditions } if conditions.len() != op.outdegree() => {
                    return Err(TopologyError::SplitArity(
                        op.op_id,
                        conditions.len(),
                        op.outdegree(),
                    ));
                }
                _ => {}
            }
        }

        if !self.operators.iter().any(|op| op.indegree() == 0) {
            return Err(TopologyError::NoSource);
        }

        // Kahn's algorithm; anything left over sits on a cycle.
        let mut indeg: HashMap<u8, usize> = self
            .operators
            .iter()
            .map(|op| (op.op_id, op.indegree()))
            .collect();
        let mut ready: Vec<u8> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut visited = 0usize;
        while let Some(id) = ready.pop() {
            visited += 1;
            for &succ in &by_id[&id].successors {
                let d = indeg.get_mut(&succ).expect("validated edge");
                *d -= 1;
                if *d == 0 {
                    ready.push(succ);
                }
            }
        }
        if visited != self.operators.len() {
            let stuck = indeg
                .iter()
                .filter(|(_, &d)| d > 0)
                .map(|(&id, _)| id)
                .min()
                .unwrap_or(0);
            return Err(TopologyError::Cycle(stuck));
        }

        Ok(())
    }
}

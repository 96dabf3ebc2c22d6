//! The master-less vertex runtime: topology, channel wiring, thread loops,
//! pipelining, and lifecycle.

pub mod dataflow;
pub mod operator;
pub mod topology;
pub(crate) mod vertex;

pub use dataflow::{
    build_dataflow, stream_process, BuildError, DataflowInstance, DataflowOptions, RunHandle,
    RunReport, ThreadCounts, VertexCtx, VertexFactory, VertexReport,
};
pub use operator::{
    EndpointId, OpError, Operator, Router, Source, SourceContext, StepOutputs, VertexBehavior,
};
pub use topology::{
    AggKind, AggStage, AggregateParams, GeneratorParams, JoinFunction, KeySelector, MapFunction,
    OperatorDescriptor, OperatorKind, Predicate, RoutingStrategy, ScriptedEvent, ScriptedParams,
    TableSource, Topology, TopologyError, WindowJoinParams, COLLECTOR_OP_ID, MAX_OP_ID,
};

//! The three benchmark dataflows.
//!
//! * SWA — generator, windowed count of everything under one key, sink.
//! * YSB — generator, view filter, static ad-to-campaign join, per-campaign
//!   windowed count, sink.
//! * YSB* — generator, click-or-view filter, split into click and view
//!   streams, a static join and windowed count per branch, a windowed join
//!   computing the click/view ratio per campaign, sink.
//!
//! Routing follows the benchmark semantics: value sharding upstream of the
//! static join (any placement is correct there, which is what lets those
//! operators pipeline), key sharding from the static join onward so each
//! campaign's single-stage aggregation lands on one rank, and key sharding
//! of finalized events to the sink.

use crate::bench::generator::{EVENT_TYPE_CLICK, EVENT_TYPE_VIEW};
use crate::runtime::topology::{
    AggKind, AggStage, AggregateParams, GeneratorParams, JoinFunction, KeySelector, OperatorKind,
    OperatorDescriptor, Predicate, RoutingStrategy, TableSource, Topology, WindowJoinParams,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Workload {
    Swa,
    Ysb,
    YsbStar,
}

impl Workload {
    pub fn parse(name: &str) -> Option<Workload> {
        match name {
            "swa" => Some(Workload::Swa),
            "ysb" => Some(Workload::Ysb),
            "ysb-star" | "ysb_star" | "ysbstar" => Some(Workload::YsbStar),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Workload::Swa => "swa",
            Workload::Ysb => "ysb",
            Workload::YsbStar => "ysb-star",
        }
    }
}

/// Everything needed to instantiate one benchmark topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub generator: GeneratorParams,
    pub pipelining: bool,
}

impl WorkloadSpec {
    pub fn new(generator: GeneratorParams, pipelining: bool) -> Self {
        WorkloadSpec {
            generator,
            pipelining,
        }
    }

    fn window_ms(&self) -> u64 {
        self.generator.window_ms
    }

    fn ads_table(&self) -> TableSource {
        TableSource::AdsToCampaigns {
            num_campaigns: self.generator.num_campaigns,
            ads_per_campaign: self.generator.ads_per_campaign,
        }
    }
}

pub fn build_topology(workload: Workload, spec: &WorkloadSpec) -> Topology {
    match workload {
        Workload::Swa => build_swa_topology(spec),
        Workload::Ysb => build_ysb_topology(spec),
        Workload::YsbStar => build_ysb_star_topology(spec),
    }
}

/// Generator -> Aggregation (count over all events, single key) -> Sink.
pub fn build_swa_topology(spec: &WorkloadSpec) -> Topology {
    let window_ms = spec.window_ms();
    Topology::new(vec![
        OperatorDescriptor {
            op_id: 0,
            kind: OperatorKind::Generator(spec.generator.clone()),
            predecessors: vec![],
            successors: vec![1],
            pipelined: spec.pipelining,
            // The single-stage single-key count must see every event at
            // one rank, so the edge routes by the aggregation key.
            routing: RoutingStrategy::ShardByKey(KeySelector::Constant(0)),
        },
        OperatorDescriptor {
            op_id: 1,
            kind: OperatorKind::Aggregate(AggregateParams {
                function: AggKind::Count,
                key: KeySelector::Constant(0),
                window_ms,
                stage: AggStage::Single,
            }),
            predecessors: vec![0],
            successors: vec![2],
            pipelined: false,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 2,
            kind: OperatorKind::Sink { window_ms },
            predecessors: vec![1],
            successors: vec![],
            pipelined: false,
            routing: RoutingStrategy::ShardByValue,
        },
    ])
    .expect("static workload topology")
}

/// Generator -> Filter (views) -> StaticJoin (ad -> campaign) ->
/// Aggregation (count per campaign) -> Sink.
pub fn build_ysb_topology(spec: &WorkloadSpec) -> Topology {
    let window_ms = spec.window_ms();
    Topology::new(vec![
        OperatorDescriptor {
            op_id: 0,
            kind: OperatorKind::Generator(spec.generator.clone()),
            predecessors: vec![],
            successors: vec![1],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByValue,
        },
        OperatorDescriptor {
            op_id: 1,
            kind: OperatorKind::Filter {
                predicate: Predicate::EventTypeIs(EVENT_TYPE_VIEW),
            },
            predecessors: vec![0],
            successors: vec![2],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByValue,
        },
        OperatorDescriptor {
            op_id: 2,
            kind: OperatorKind::StaticJoin {
                table: spec.ads_table(),
            },
            predecessors: vec![1],
            successors: vec![3],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 3,
            kind: OperatorKind::Aggregate(AggregateParams {
                function: AggKind::Count,
                key: KeySelector::EventKey,
                window_ms,
                stage: AggStage::Single,
            }),
            predecessors: vec![2],
            successors: vec![4],
            pipelined: false,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 4,
            kind: OperatorKind::Sink { window_ms },
            predecessors: vec![3],
            successors: vec![],
            pipelined: false,
            routing: RoutingStrategy::ShardByValue,
        },
    ])
    .expect("static workload topology")
}

/// Generator -> Filter (clicks and views) -> Split (click | view) ->
/// {StaticJoin -> Aggregation} per branch -> windowed ratio Join -> Sink.
pub fn build_ysb_star_topology(spec: &WorkloadSpec) -> Topology {
    let window_ms = spec.window_ms();
    let agg = |key| {
        OperatorKind::Aggregate(AggregateParams {
            function: AggKind::Count,
            key,
            window_ms,
            stage: AggStage::Single,
        })
    };
    Topology::new(vec![
        OperatorDescriptor {
            op_id: 0,
            kind: OperatorKind::Generator(spec.generator.clone()),
            predecessors: vec![],
            successors: vec![1],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByValue,
        },
        OperatorDescriptor {
            op_id: 1,
            kind: OperatorKind::Filter {
                predicate: Predicate::EventTypeOneOf(EVENT_TYPE_CLICK, EVENT_TYPE_VIEW),
            },
            predecessors: vec![0],
            successors: vec![2],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByValue,
        },
        OperatorDescriptor {
            op_id: 2,
            kind: OperatorKind::Split {
                conditions: vec![
                    Predicate::EventTypeIs(EVENT_TYPE_CLICK),
                    Predicate::EventTypeIs(EVENT_TYPE_VIEW),
                ],
            },
            predecessors: vec![1],
            successors: vec![3, 4],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByValue,
        },
        OperatorDescriptor {
            op_id: 3,
            kind: OperatorKind::StaticJoin {
                table: spec.ads_table(),
            },
            predecessors: vec![2],
            successors: vec![5],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 4,
            kind: OperatorKind::StaticJoin {
                table: spec.ads_table(),
            },
            predecessors: vec![2],
            successors: vec![6],
            pipelined: spec.pipelining,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 5,
            kind: agg(KeySelector::EventKey),
            predecessors: vec![3],
            successors: vec![7],
            pipelined: false,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 6,
            kind: agg(KeySelector::EventKey),
            predecessors: vec![4],
            successors: vec![7],
            pipelined: false,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 7,
            kind: OperatorKind::WindowJoin(WindowJoinParams {
                window_ms,
                function: JoinFunction::RatioMicros,
            }),
            // Clicks left, views right: the ratio is clicks / views.
            predecessors: vec![5, 6],
            successors: vec![8],
            pipelined: false,
            routing: RoutingStrategy::ShardByKey(KeySelector::EventKey),
        },
        OperatorDescriptor {
            op_id: 8,
            kind: OperatorKind::Sink { window_ms },
            predecessors: vec![7],
            successors: vec![],
            pipelined: false,
            routing: RoutingStrategy::ShardByValue,
        },
    ])
    .expect("static workload topology")
}

//! Benchmark workloads, generator, measurement, and run orchestration.

pub mod generator;
pub mod harness;
pub mod sink;
pub mod st_search;
pub mod workloads;

pub use generator::{
    GeneratorStats, LogBook, LoggedEvent, EVENT_TYPES, EVENT_TYPE_CLICK, EVENT_TYPE_PURCHASE,
    EVENT_TYPE_VIEW,
};
pub use harness::{
    run_in_process, run_socket_rank, run_socket_world, BenchFactory, EngineOptions, HarnessError,
    RunOutcome,
};
pub use sink::{
    read_results_csv, summarize, write_results_csv, write_summary_csv, RunSummary, SinkCollector,
    SinkOp, WindowResultRecord,
};
pub use st_search::{
    detect_knee, find_sustainable_throughput, write_st_report_csv, StOutcome, StReport, StRow,
    StSearchConfig,
};
pub use workloads::{
    build_swa_topology, build_topology, build_ysb_star_topology, build_ysb_topology, Workload,
    WorkloadSpec,
};

//! Process entry point: parse the run configuration, launch the requested
//! number of ranks (threads in one process, or one process per rank
//! joining over sockets), run the selected workload, and write the result
//! CSVs.
//!
//! Exit codes: 0 clean, 1 runtime failure, 2 configuration error.

mod config;

use anyhow::Context;
use clap::Parser;
use config::{BackendArg, Cli, RunConfig};
use rill_core::bench::{
    build_topology, find_sustainable_throughput, run_in_process, run_socket_rank,
    write_results_csv, write_st_report_csv, write_summary_csv, EngineOptions, RunOutcome,
    StSearchConfig, WorkloadSpec,
};
use rill_core::runtime::GeneratorParams;
use rill_core::transport::{RankAddress, SocketBinding, TransportConfig};
use std::path::Path;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("configuration error: {err}");
            return ExitCode::from(2);
        }
    };
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("run failed: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn generator_params(config: &RunConfig, rate: u64, duration_s: u64) -> GeneratorParams {
    GeneratorParams {
        rate,
        duration_s,
        window_ms: config.window_ms,
        seed: config.seed,
        avg_event_bytes: config.avg_event_bytes,
        num_campaigns: config.num_campaigns,
        ads_per_campaign: config.ads_per_campaign,
        paced: config.paced,
        capture_log: false,
    }
}

fn engine_options(config: &RunConfig) -> EngineOptions {
    EngineOptions {
        queue_capacity: config.queue_capacity,
        batch_max: config.batch_max,
    }
}

fn execute(config: &RunConfig) -> anyhow::Result<()> {
    let out_dir = Path::new(&config.output_dir);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    config
        .write_echo(&out_dir.join("run_config.json"))
        .context("echoing the effective configuration")?;

    if config.st_search {
        return st_search(config, out_dir);
    }

    let spec = WorkloadSpec::new(
        generator_params(config, config.rate, config.duration_s),
        config.pipelining,
    );
    let topology = build_topology(config.workload, &spec);

    let outcome = match config.backend {
        BackendArg::InProcess => {
            log::info!(
                "launching {} in-process ranks, workload={} rate={} duration={}s",
                config.world_size,
                config.workload.name(),
                config.rate,
                config.duration_s
            );
            run_in_process(&topology, config.world_size, &engine_options(config))?
        }
        BackendArg::Socket => {
            let rank = config.rank.expect("validated: rank present in socket mode");
            let addresses: Vec<RankAddress> = config
                .peer_list
                .iter()
                .map(|(rank, endpoint)| RankAddress {
                    rank: *rank,
                    endpoint: endpoint.clone(),
                })
                .collect();
            let mut transport_config = TransportConfig::socket(addresses);
            transport_config.send_queue_capacity = config.queue_capacity;
            transport_config.connect_timeout_ms = config.connect_timeout_ms;
            let endpoint = &transport_config.addresses[rank].endpoint;
            log::info!(
                "launching socket rank {rank}/{} on {endpoint}, workload={}",
                config.world_size,
                config.workload.name()
            );
            let binding = SocketBinding::bind(endpoint)
                .with_context(|| format!("binding {endpoint}"))?;
            run_socket_rank(
                &topology,
                rank,
                binding,
                &transport_config,
                &engine_options(config),
            )?
        }
    };

    dump_vertex_counters(&outcome);
    let is_writer = config.backend == BackendArg::InProcess || config.rank == Some(0);
    if is_writer {
        let summary = outcome.summary(config.rate);
        write_results_csv(&out_dir.join("results.csv"), &outcome.records)?;
        write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
        log::info!(
            "run complete: windows={} events={} mean_latency={:.1}ms p99={:.1}ms dropped={} late={} max_schedule_lag={}ms",
            summary.windows_processed,
            summary.events_processed,
            summary.mean_latency_ms,
            summary.p99_latency_ms,
            summary.events_dropped,
            summary.events_late,
            outcome.max_schedule_lag_ms
        );
    }
    if !outcome.clean_shutdown() {
        anyhow::bail!("engine reported an unclean shutdown (operator errors or leftover data)");
    }
    Ok(())
}

fn st_search(config: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    if config.backend != BackendArg::InProcess {
        anyhow::bail!("the sustainable-throughput search drives in-process deployments only");
    }
    let st = StSearchConfig {
        start_rate: config.st_start_rate,
        rate_step: config.st_rate_step,
        max_rate: config.st_max_rate,
        run_duration_s: config.st_run_duration_s,
        baseline_runs: config.st_baseline_runs,
        backpressure_factor: config.st_backpressure_factor,
    };
    st.validate().map_err(anyhow::Error::msg)?;
    log::info!(
        "sustainable-throughput search: rates {}..={} step {}, {}s per run, factor {}",
        st.start_rate,
        st.max_rate,
        st.rate_step,
        st.run_duration_s,
        st.backpressure_factor
    );
    let report = find_sustainable_throughput(&st, |rate| {
        let spec = WorkloadSpec::new(
            generator_params(config, rate, st.run_duration_s),
            config.pipelining,
        );
        let topology = build_topology(config.workload, &spec);
        match run_in_process(&topology, config.world_size, &engine_options(config)) {
            Ok(outcome) => {
                let summary = outcome.summary(rate);
                log::info!(
                    "rate {rate}: mean latency {:.1} ms over {} windows",
                    summary.mean_latency_ms,
                    summary.windows_processed
                );
                summary.mean_latency_ms
            }
            Err(err) => {
                log::error!("probe at rate {rate} failed: {err}; treating as saturated");
                f64::INFINITY
            }
        }
    });
    write_st_report_csv(&out_dir.join("st_report.csv"), &report)?;
    match report.outcome {
        rill_core::bench::StOutcome::Knee {
            sustainable,
            knee_rate,
        } => log::info!("sustainable throughput {sustainable} events/s (back-pressure at {knee_rate})"),
        rill_core::bench::StOutcome::Exhausted { max_tested } => {
            log::info!("no back-pressure up to {max_tested} events/s; range exhausted")
        }
        rill_core::bench::StOutcome::BelowStart { first_rate } => {
            log::warn!("back-pressure already at the first rate {first_rate}; ST below start")
        }
    }
    Ok(())
}

fn dump_vertex_counters(outcome: &RunOutcome) {
    for report in &outcome.reports {
        for v in &report.vertices {
            log::info!(
                "vertex rank={} op={} name={} events_in={} events_out={} drops={} late={} dup_markers={} errors={} transport_sends={} pipeline_transfers={}",
                report.rank,
                v.op_id,
                v.name,
                v.metrics.events_in,
                v.metrics.events_out,
                v.metrics.dropped,
                v.metrics.late,
                v.metrics.duplicate_markers,
                v.metrics.op_errors,
                v.metrics.transport_sends,
                v.metrics.pipeline_transfers
            );
        }
    }
}

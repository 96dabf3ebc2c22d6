//! Flag parsing and the effective run configuration, which is echoed as
//! JSON into the output directory and can be loaded back with `--config`.

use clap::{Parser, ValueEnum};
use rill_core::bench::Workload;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendArg {
    InProcess,
    Socket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn as_bool(self) -> bool {
        self == Toggle::On
    }
}

/// Peer workers route messages directly to one another over tagged
/// channels and execute the selected benchmark dataflow; results land in
/// the output directory as CSV files.
#[derive(Debug, Parser)]
#[command(name = "rill", version, about)]
pub struct Cli {
    /// Load a previously echoed run_config.json instead of flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<String>,

    /// Benchmark dataflow to run: swa, ysb, or ysb-star.
    #[arg(long, env = "RILL_WORKLOAD")]
    pub workload: Option<String>,

    /// Number of ranks in the deployment.
    #[arg(long, env = "RILL_WORLD_SIZE", default_value_t = 1)]
    pub world_size: usize,

    /// in-process: all ranks as threads here; socket: this process is one
    /// rank of a multi-process deployment.
    #[arg(long, value_enum, env = "RILL_BACKEND", default_value = "in-process")]
    pub backend: BackendArg,

    /// This process's rank (socket backend only).
    #[arg(long, env = "RILL_RANK")]
    pub rank: Option<usize>,

    /// Peers file with one `rank host:port` line per rank (socket only).
    #[arg(long, env = "RILL_PEERS", value_name = "FILE")]
    pub peers: Option<String>,

    /// Same-rank queue shortcut for stateless operators.
    #[arg(long, value_enum, env = "RILL_PIPELINING", default_value = "off")]
    pub pipelining: Toggle,

    /// Target generator rate, events/second across all ranks.
    #[arg(long, env = "RILL_RATE", default_value_t = 10_000)]
    pub rate: u64,

    /// Generation duration in seconds.
    #[arg(long = "duration", env = "RILL_DURATION", default_value_t = 60)]
    pub duration_s: u64,

    /// Tumbling window size in milliseconds.
    #[arg(long, env = "RILL_WINDOW_MS", default_value_t = 10_000)]
    pub window_ms: u64,

    /// Generator seed; fixed seed + fixed world size reproduces the run.
    #[arg(long, env = "RILL_SEED", default_value_t = 1)]
    pub seed: u64,

    /// Directory for results.csv, summary.csv, run_config.json.
    #[arg(long, env = "RILL_OUTPUT_DIR", default_value = "rill-out")]
    pub output_dir: String,

    /// Mean serialized event size the generator aims for.
    #[arg(long, default_value_t = 136)]
    pub avg_event_bytes: usize,

    #[arg(long, default_value_t = 100)]
    pub num_campaigns: u64,

    #[arg(long, default_value_t = 10)]
    pub ads_per_campaign: u64,

    /// Disable pacing: emit as fast as possible on the nominal schedule.
    /// Results stay identical; latency figures become meaningless.
    #[arg(long, default_value_t = false)]
    pub unpaced: bool,

    /// Bound of every inter-thread queue, in messages.
    #[arg(long, env = "RILL_QUEUE_CAPACITY", default_value_t = 1024)]
    pub queue_capacity: usize,

    /// Events per outgoing batch at the sources.
    #[arg(long, default_value_t = 128)]
    pub batch_max: usize,

    /// Socket connect retry budget in milliseconds.
    #[arg(long, default_value_t = 5_000)]
    pub connect_timeout_ms: u64,

    /// Run the sustainable-throughput search instead of a single run.
    #[arg(long, default_value_t = false)]
    pub st_search: bool,

    #[arg(long, default_value_t = 2_000)]
    pub st_start_rate: u64,

    #[arg(long, default_value_t = 2_000)]
    pub st_rate_step: u64,

    #[arg(long, default_value_t = 40_000)]
    pub st_max_rate: u64,

    #[arg(long, default_value_t = 10)]
    pub st_run_duration: u64,

    #[arg(long, default_value_t = 3)]
    pub st_baseline_runs: usize,

    /// Latency multiplier over the baseline that marks back-pressure.
    #[arg(long, default_value_t = 4.0)]
    pub st_backpressure_factor: f64,
}

/// The validated, effective configuration of one run. Serializes to the
/// `run_config.json` echo; parsing that file back yields the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub workload: Workload,
    pub world_size: usize,
    pub backend: BackendArg,
    pub rank: Option<usize>,
    /// Resolved peer endpoints, one per rank (socket only).
    pub peer_list: Vec<(usize, String)>,
    pub pipelining: bool,
    pub rate: u64,
    pub duration_s: u64,
    pub window_ms: u64,
    pub seed: u64,
    pub output_dir: String,
    pub avg_event_bytes: usize,
    pub num_campaigns: u64,
    pub ads_per_campaign: u64,
    pub paced: bool,
    pub queue_capacity: usize,
    pub batch_max: usize,
    pub connect_timeout_ms: u64,
    pub st_search: bool,
    pub st_start_rate: u64,
    pub st_rate_step: u64,
    pub st_max_rate: u64,
    pub st_run_duration_s: u64,
    pub st_baseline_runs: usize,
    pub st_backpressure_factor: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown workload `{0}` (expected swa, ysb, or ysb-star)")]
    UnknownWorkload(String),
    #[error("--workload is required (or pass --config)")]
    MissingWorkload,
    #[error("--rank is only meaningful with --backend socket")]
    RankWithoutSocket,
    #[error("socket backend requires --rank")]
    MissingRank,
    #[error("socket backend requires --peers")]
    MissingPeers,
    #[error("cannot read peers file {path}: {source}")]
    PeersUnreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("peers file line {line}: expected `rank host:port`")]
    PeersMalformed { line: usize },
    #[error("peers file lists {found} ranks, world size is {expected}")]
    PeersCount { found: usize, expected: usize },
    #[error("rank {rank} outside world size {world_size}")]
    RankOutOfRange { rank: usize, world_size: usize },
    #[error("world size must be between 1 and 256, got {0}")]
    BadWorldSize(usize),
    #[error("window size must be > 0 ms")]
    ZeroWindow,
    #[error("cannot read config file {path}: {source}")]
    ConfigUnreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("config file {path} is not valid: {source}")]
    ConfigInvalid {
        path: String,
        source: serde_json::Error,
    },
}

fn parse_peers(path: &str) -> Result<Vec<(usize, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::PeersUnreadable {
        path: path.to_string(),
        source,
    })?;
    let mut peers = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let rank = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or(ConfigError::PeersMalformed { line: idx + 1 })?;
        let endpoint = parts
            .next()
            .ok_or(ConfigError::PeersMalformed { line: idx + 1 })?
            .to_string();
        peers.push((rank, endpoint));
    }
    peers.sort_by_key(|(rank, _)| *rank);
    Ok(peers)
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, ConfigError> {
        if let Some(path) = &cli.config {
            let text =
                std::fs::read_to_string(path).map_err(|source| ConfigError::ConfigUnreadable {
                    path: path.clone(),
                    source,
                })?;
            let config: RunConfig =
                serde_json::from_str(&text).map_err(|source| ConfigError::ConfigInvalid {
                    path: path.clone(),
                    source,
                })?;
            config.validate()?;
            return Ok(config);
        }

        let workload_name = cli.workload.ok_or(ConfigError::MissingWorkload)?;
        let workload = Workload::parse(&workload_name)
            .ok_or_else(|| ConfigError::UnknownWorkload(workload_name.clone()))?;

        let peer_list = match (cli.backend, &cli.peers) {
            (BackendArg::Socket, Some(path)) => parse_peers(path)?,
            (BackendArg::Socket, None) => return Err(ConfigError::MissingPeers),
            (BackendArg::InProcess, _) => Vec::new(),
        };

        let config = RunConfig {
            workload,
            world_size: cli.world_size,
            backend: cli.backend,
            rank: cli.rank,
            peer_list,
            pipelining: cli.pipelining.as_bool(),
            rate: cli.rate,
            duration_s: cli.duration_s,
            window_ms: cli.window_ms,
            seed: cli.seed,
            output_dir: cli.output_dir,
            avg_event_bytes: cli.avg_event_bytes,
            num_campaigns: cli.num_campaigns,
            ads_per_campaign: cli.ads_per_campaign,
            paced: !cli.unpaced,
            queue_capacity: cli.queue_capacity,
            batch_max: cli.batch_max,
            connect_timeout_ms: cli.connect_timeout_ms,
            st_search: cli.st_search,
            st_start_rate: cli.st_start_rate,
            st_rate_step: cli.st_rate_step,
            st_max_rate: cli.st_max_rate,
            st_run_duration_s: cli.st_run_duration,
            st_baseline_runs: cli.st_baseline_runs,
            st_backpressure_factor: cli.st_backpressure_factor,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.world_size == 0 || self.world_size > 256 {
            return Err(ConfigError::BadWorldSize(self.world_size));
        }
        if self.window_ms == 0 {
            return Err(ConfigError::ZeroWindow);
        }
        match self.backend {
            BackendArg::InProcess => {
                if self.rank.is_some() {
                    return Err(ConfigError::RankWithoutSocket);
                }
            }
            BackendArg::Socket => {
                let rank = self.rank.ok_or(ConfigError::MissingRank)?;
                if rank >= self.world_size {
                    return Err(ConfigError::RankOutOfRange {
                        rank,
                        world_size: self.world_size,
                    });
                }
                if self.peer_list.len() != self.world_size {
                    return Err(ConfigError::PeersCount {
                        found: self.peer_list.len(),
                        expected: self.world_size,
                    });
                }
                for (expected, (rank, _)) in self.peer_list.iter().enumerate() {
                    if *rank != expected {
                        return Err(ConfigError::PeersMalformed { line: expected + 1 });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_echo(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_args() -> Vec<&'static str> {
        vec!["rill", "--workload", "swa"]
    }

    #[test]
    fn defaults_parse() {
        let cli = Cli::parse_from(base_args());
        let config = RunConfig::from_cli(cli).unwrap();
        assert_eq!(config.workload, Workload::Swa);
        assert_eq!(config.world_size, 1);
        assert!(config.paced);
        assert!(!config.pipelining);
    }

    #[test]
    fn unknown_workload_rejected() {
        let cli = Cli::parse_from(["rill", "--workload", "wordcount"]);
        assert!(matches!(
            RunConfig::from_cli(cli),
            Err(ConfigError::UnknownWorkload(_))
        ));
    }

    #[test]
    fn socket_requires_rank_and_peers() {
        let cli = Cli::parse_from([
            "rill",
            "--workload",
            "ysb",
            "--backend",
            "socket",
            "--world-size",
            "2",
        ]);
        assert!(matches!(
            RunConfig::from_cli(cli),
            Err(ConfigError::MissingPeers)
        ));
    }

    #[test]
    fn config_round_trips_through_the_echo() {
        let cli = Cli::parse_from([
            "rill",
            "--workload",
            "ysb-star",
            "--world-size",
            "4",
            "--pipelining",
            "on",
            "--rate",
            "12345",
            "--seed",
            "9",
        ]);
        let config = RunConfig::from_cli(cli).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run_config.json");
        config.write_echo(&path).unwrap();
        let reloaded: RunConfig =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(reloaded, config);
    }

    #[test]
    fn peers_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("peers");
        std::fs::write(&path, "1 127.0.0.1:9002\n0 127.0.0.1:9001\n").unwrap();
        let peers = parse_peers(path.to_str().unwrap()).unwrap();
        assert_eq!(
            peers,
            vec![
                (0, "127.0.0.1:9001".to_string()),
                (1, "127.0.0.1:9002".to_string())
            ]
        );
    }
}

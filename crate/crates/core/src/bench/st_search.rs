//! Sustainable-throughput search.
//!
//! Back-pressure shows up as a sudden rise in average event-time latency
//! once the input rate passes what the deployment can absorb. The search
//! probes a ladder of rates, takes the mean latency of the first few runs
//! as the baseline, and declares back-pressure at the first rate whose
//! mean latency exceeds `backpressure_factor` times that baseline. The
//! sustainable throughput is the last rate before that knee.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StSearchConfig {
    pub start_rate: u64,
    pub rate_step: u64,
    pub max_rate: u64,
    /// Seconds each probed rate runs for (used by engine-backed probes).
    pub run_duration_s: u64,
    /// Number of leading runs whose mean latency forms the baseline.
    pub baseline_runs: usize,
    /// Latency multiplier over the baseline that marks back-pressure.
    pub backpressure_factor: f64,
}

impl Default for StSearchConfig {
    fn default() -> Self {
        StSearchConfig {
            start_rate: 2_000,
            rate_step: 2_000,
            max_rate: 40_000,
            run_duration_s: 10,
            baseline_runs: 3,
            backpressure_factor: 4.0,
        }
    }
}

impl StSearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rate_step == 0 {
            return Err("rate_step must be > 0".into());
        }
        if self.backpressure_factor <= 1.0 {
            return Err("backpressure_factor must be > 1".into());
        }
        if self.baseline_runs == 0 {
            return Err("baseline_runs must be > 0".into());
        }
        Ok(())
    }

    pub fn ladder(&self) -> Vec<u64> {
        let mut rates = Vec::new();
        let mut rate = self.start_rate;
        while rate <= self.max_rate {
            rates.push(rate);
            rate += self.rate_step;
        }
        rates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StRow {
    pub rate: u64,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StOutcome {
    /// Back-pressure already at the first probed rate.
    BelowStart { first_rate: u64 },
    /// A knee was found; `sustainable` is the rate preceding it.
    Knee { sustainable: u64, knee_rate: u64 },
    /// No knee within the probed range; the whole range was sustained.
    Exhausted { max_tested: u64 },
}

impl StOutcome {
    pub fn sustainable_rate(&self) -> Option<u64> {
        match self {
            StOutcome::BelowStart { .. } => None,
            StOutcome::Knee { sustainable, .. } => Some(*sustainable),
            StOutcome::Exhausted { max_tested } => Some(*max_tested),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StReport {
    pub rows: Vec<StRow>,
    pub baseline_latency_ms: f64,
    pub threshold_ms: f64,
    pub outcome: StOutcome,
}

/// Runs the detector over explicit `(rate, mean latency)` measurements.
pub fn detect_knee(rows: &[StRow], baseline_runs: usize, backpressure_factor: f64) -> StReport {
    assert!(!rows.is_empty(), "need at least one measurement");
    let n = baseline_runs.clamp(1, rows.len());
    let baseline = rows[..n].iter().map(|r| r.mean_latency_ms).sum::<f64>() / n as f64;
    let threshold = baseline * backpressure_factor;

    let mut outcome = StOutcome::Exhausted {
        max_tested: rows.last().expect("non-empty").rate,
    };
    for (idx, row) in rows.iter().enumerate() {
        if row.mean_latency_ms > threshold {
            outcome = if idx == 0 {
                StOutcome::BelowStart {
                    first_rate: row.rate,
                }
            } else {
                StOutcome::Knee {
                    sustainable: rows[idx - 1].rate,
                    knee_rate: row.rate,
                }
            };
            break;
        }
    }

    StReport {
        rows: rows.to_vec(),
        baseline_latency_ms: baseline,
        threshold_ms: threshold,
        outcome,
    }
}

/// Probes rates in increasing order until back-pressure or the end of the
/// ladder. `probe` runs the workload at one rate and returns its mean
/// event-time latency in milliseconds.
pub fn find_sustainable_throughput(
    config: &StSearchConfig,
    mut probe: impl FnMut(u64) -> f64,
) -> StReport {
    let ladder = config.ladder();
    assert!(!ladder.is_empty(), "empty rate ladder");
    let mut rows = Vec::with_capacity(ladder.len());
    let mut baseline: Option<f64> = None;
    for rate in ladder {
        let latency = probe(rate);
        rows.push(StRow {
            rate,
            mean_latency_ms: latency,
        });
        if rows.len() >= config.baseline_runs && baseline.is_none() {
            baseline = Some(
                rows.iter().map(|r| r.mean_latency_ms).sum::<f64>() / rows.len() as f64,
            );
        }
        if let Some(b) = baseline {
            if latency > b * config.backpressure_factor {
                break;
            }
        }
    }
    detect_knee(&rows, config.baseline_runs, config.backpressure_factor)
}

pub const ST_REPORT_HEADER: &str = "rate,mean_latency_ms,sustained";

pub fn write_st_report_csv(path: &std::path::Path, report: &StReport) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{ST_REPORT_HEADER}")?;
    for row in &report.rows {
        let sustained = row.mean_latency_ms <= report.threshold_ms;
        writeln!(file, "{},{:.3},{}", row.rate, row.mean_latency_ms, sustained)?;
    }
    file.flush()
}

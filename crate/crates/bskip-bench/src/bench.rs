//! Benchmark execution: load and run phases across threads, batch-of-ten
//! latency sampling, nearest-rank percentiles, and median-of-trials
//! aggregation, emitted as TSV.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use bskiplist::{BSkipList, Key, PromotionParams, Value};
use rand::rngs::SmallRng;
use rand::SeedableRng;
use thiserror::Error;

use crate::workload::{
    mix64, Distribution, LoadKeys, MixName, OpRecord, OpStream, WorkloadSpec, DEFAULT_MAX_SCAN_LEN,
};

/// Bytes per stored element: 8-byte key plus 8-byte value.
pub const KEY_VALUE_BYTES: usize = 16;

/// Operations per latency sample; each sample is the batch mean.
pub const LATENCY_BATCH: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("structural audit failed: {0}")]
    AuditFailed(String),
    #[error("no latency samples collected")]
    EmptySamples,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed TSV: {0}")]
    Tsv(String),
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub mix: MixName,
    pub distribution: Distribution,
    pub threads: usize,
    pub record_count: u64,
    pub operation_count: u64,
    pub node_bytes: usize,
    pub c_factor: f64,
    pub max_height: usize,
    pub seed: u64,
    pub trials: usize,
    pub warmup: bool,
    pub audit: bool,
}

impl BenchConfig {
    pub fn node_capacity(&self) -> usize {
        self.node_bytes / KEY_VALUE_BYTES
    }

    pub fn params(&self) -> Result<PromotionParams, BenchError> {
        if self.threads < 1 {
            return Err(BenchError::InvalidConfig("threads must be >= 1".into()));
        }
        if self.trials < 1 {
            return Err(BenchError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.record_count < 1 {
            return Err(BenchError::InvalidConfig("records must be >= 1".into()));
        }
        if self.node_capacity() < 2 {
            return Err(BenchError::InvalidConfig(format!(
                "{} node bytes hold fewer than 2 elements",
                self.node_bytes
            )));
        }
        PromotionParams::new(self.node_capacity(), self.c_factor, self.max_height)
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))
    }

    fn spec(&self, trial: usize) -> WorkloadSpec {
        WorkloadSpec {
            mix: self.mix,
            distribution: self.distribution,
            record_count: self.record_count,
            operation_count: self.operation_count,
            max_scan_len: DEFAULT_MAX_SCAN_LEN,
            seed: self.seed.wrapping_add(trial as u64),
        }
    }
}

/// Measured-phase results of one trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub throughput_ops_per_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub p999_us: f64,
    pub root_write_locks: u64,
    pub steps_per_level: f64,
    pub leaf_nodes_per_range: f64,
}

/// Executes one op against the index. The per-thread rng feeds insert
/// height draws only; keys and values come from the deterministic stream.
fn apply(list: &BSkipList, op: OpRecord, rng: &mut SmallRng) {
    match op {
        OpRecord::Find { key } => {
            list.get(Key(key));
        }
        OpRecord::Insert { key, value } => {
            list.insert(Key(key), Value(value), rng).expect("benchmark keys are never reserved");
        }
        OpRecord::Range { key, scan_len } => {
            list.range(Key(key), scan_len);
        }
    }
}

/// Runs `ops` from `stream`, timing each consecutive batch of ten and
/// pushing the batch mean (in microseconds per op) after the clock stops.
fn timed_loop(
    list: &BSkipList,
    mut next: impl FnMut() -> Option<OpRecord>,
    rng: &mut SmallRng,
    samples: &Mutex<Vec<f64>>,
) {
    let mut local = Vec::new();
    let mut in_batch = 0;
    let mut batch_start = Instant::now();
    while let Some(op) = next() {
        apply(list, op, rng);
        in_batch += 1;
        if in_batch == LATENCY_BATCH {
            let mean_us = batch_start.elapsed().as_secs_f64() * 1e6 / LATENCY_BATCH as f64;
            local.push(mean_us);
            if local.len() == 64 {
                samples.lock().unwrap().append(&mut local);
            }
            in_batch = 0;
            batch_start = Instant::now();
        }
    }
    samples.lock().unwrap().append(&mut local);
}

/// Runs one trial and hands back the index for post-run inspection.
pub fn run_trial_keeping_index(
    config: &BenchConfig,
    trial: usize,
) -> Result<(TrialResult, BSkipList), BenchError> {
    let params = config.params()?;
    let spec = config.spec(trial);
    let list = BSkipList::new(params);
    let load = LoadKeys::new(&spec);
    let samples = Mutex::new(Vec::new());
    let measure_load = config.mix == MixName::Load;

    // Load phase: thread t inserts the records whose index is t modulo the
    // thread count. Timed only when the load itself is the workload.
    let load_start = Instant::now();
    thread::scope(|s| {
        for t in 0..config.threads {
            let list = &list;
            let load = &load;
            let samples = &samples;
            let seed = mix64(spec.seed ^ (t as u64).wrapping_add(0xb01d));
            s.spawn(move || {
                let mut rng = SmallRng::seed_from_u64(seed);
                let mut i = t as u64;
                let mut next = || {
                    if i >= load.len() {
                        return None;
                    }
                    let key = load.key(i);
                    i += config.threads as u64;
                    Some(OpRecord::Insert { key, value: mix64(key) })
                };
                if measure_load {
                    timed_loop(list, next, &mut rng, samples);
                } else {
                    while let Some(op) = next() {
                        apply(list, op, &mut rng);
                    }
                }
            });
        }
    });
    let load_elapsed = load_start.elapsed();

    let (ops_done, elapsed, counters) = if measure_load {
        (config.record_count, load_elapsed, list.stats())
    } else {
        let before = list.stats();
        let per_thread = config.operation_count / config.threads as u64;
        let run_start = Instant::now();
        thread::scope(|s| {
            for t in 0..config.threads {
                let list = &list;
                let samples = &samples;
                let spec = &spec;
                let seed = mix64(spec.seed ^ (t as u64).wrapping_add(0x2a11));
                s.spawn(move || {
                    let mut rng = SmallRng::seed_from_u64(seed);
                    let mut stream = OpStream::new(spec, t as u64);
                    let mut left = per_thread;
                    let next = move || {
                        if left == 0 {
                            return None;
                        }
                        left -= 1;
                        Some(stream.next_op())
                    };
                    timed_loop(list, next, &mut rng, samples);
                });
            }
        });
        let run_elapsed = run_start.elapsed();
        (
            per_thread * config.threads as u64,
            run_elapsed,
            list.stats().since(&before),
        )
    };

    if config.audit {
        let report = list.audit();
        if !report.is_ok() {
            return Err(BenchError::AuditFailed(report.violations.join("; ")));
        }
    }

    let mut samples = samples.into_inner().unwrap();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let result = TrialResult {
        throughput_ops_per_us: ops_done as f64 / (elapsed.as_secs_f64() * 1e6),
        p50_us: percentile(&samples, 50.0)?,
        p90_us: percentile(&samples, 90.0)?,
        p99_us: percentile(&samples, 99.0)?,
        p999_us: percentile(&samples, 99.9)?,
        root_write_locks: counters.root_write_locks,
        steps_per_level: counters.steps_per_level(),
        leaf_nodes_per_range: counters.leaves_per_range(),
    };
    Ok((result, list))
}

pub fn run_trial(config: &BenchConfig, trial: usize) -> Result<TrialResult, BenchError> {
    run_trial_keeping_index(config, trial).map(|(r, _)| r)
}

/// Runs the configured trials (plus one discarded warm-up trial when
/// enabled) and aggregates per-metric medians.
pub fn run(config: &BenchConfig) -> Result<TrialResult, BenchError> {
    let total = config.trials + config.warmup as usize;
    let mut results = Vec::with_capacity(config.trials);
    for trial in 0..total {
        let r = run_trial(config, trial)?;
        if !(config.warmup && trial == 0) {
            results.push(r);
        }
    }
    Ok(aggregate(&results))
}

/// Nearest-rank percentile: element ceil(q/100 * n) - 1 of the ascending
/// sort.
pub fn percentile(sorted: &[f64], q: f64) -> Result<f64, BenchError> {
    if sorted.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(q > 0.0 && q < 100.0);
    let idx = ((q / 100.0 * sorted.len() as f64).ceil() as usize).max(1) - 1;
    Ok(sorted[idx.min(sorted.len() - 1)])
}

fn median_f64(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Lower median on even counts.
    xs[(xs.len() - 1) / 2]
}

fn median_u64(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

/// Per-metric median across trials (lower median on even counts).
pub fn aggregate(trials: &[TrialResult]) -> TrialResult {
    assert!(!trials.is_empty());
    TrialResult {
        throughput_ops_per_us: median_f64(
            trials.iter().map(|t| t.throughput_ops_per_us).collect(),
        ),
        p50_us: median_f64(trials.iter().map(|t| t.p50_us).collect()),
        p90_us: median_f64(trials.iter().map(|t| t.p90_us).collect()),
        p99_us: median_f64(trials.iter().map(|t| t.p99_us).collect()),
        p999_us: median_f64(trials.iter().map(|t| t.p999_us).collect()),
        root_write_locks: median_u64(trials.iter().map(|t| t.root_write_locks).collect()),
        steps_per_level: median_f64(trials.iter().map(|t| t.steps_per_level).collect()),
        leaf_nodes_per_range: median_f64(
            trials.iter().map(|t| t.leaf_nodes_per_range).collect(),
        ),
    }
}

pub const TSV_HEADER: &str = "workload\tdistribution\tthreads\tthroughput_ops_per_us\tp50_us\tp90_us\tp99_us\tp999_us\troot_write_locks\tsteps_per_level\tleaf_nodes_per_range";

pub fn tsv_row(config: &BenchConfig, r: &TrialResult) -> String {
    format!(
        "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\t{:.6}",
        config.mix.name(),
        config.distribution.name(),
        config.threads,
        r.throughput_ops_per_us,
        r.p50_us,
        r.p90_us,
        r.p99_us,
        r.p999_us,
        r.root_write_locks,
        r.steps_per_level,
        r.leaf_nodes_per_range,
    )
}

pub fn write_tsv(path: &Path, rows: &[String]) -> Result<(), BenchError> {
    let io_err = |source| BenchError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    let body = std::iter::once(TSV_HEADER.to_string())
        .chain(rows.iter().cloned())
        .collect::<Vec<_>>()
        .join("\n");
    writeln!(file, "{body}").map_err(io_err)
}

/// One parsed TSV data row; identifiers as strings, metrics numeric.
#[derive(Clone, Debug, PartialEq)]
pub struct TsvRow {
    pub workload: String,
    pub distribution: String,
    pub threads: usize,
    pub throughput_ops_per_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub p999_us: f64,
    pub root_write_locks: u64,
    pub steps_per_level: f64,
    pub leaf_nodes_per_range: f64,
}

pub fn parse_tsv(text: &str) -> Result<Vec<TsvRow>, BenchError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TSV_HEADER => {}
        other => return Err(BenchError::Tsv(format!("bad header: {other:?}"))),
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 11 {
                return Err(BenchError::Tsv(format!("{} columns in {line:?}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| BenchError::Tsv(format!("{s:?}: {e}")))
            };
            Ok(TsvRow {
                workload: f[0].to_string(),
                distribution: f[1].to_string(),
                threads: f[2]
                    .parse()
                    .map_err(|e| BenchError::Tsv(format!("{:?}: {e}", f[2])))?,
                throughput_ops_per_us: num(f[3])?,
                p50_us: num(f[4])?,
                p90_us: num(f[5])?,
                p99_us: num(f[6])?,
                p999_us: num(f[7])?,
                root_write_locks: f[8]
                    .parse()
                    .map_err(|e| BenchError::Tsv(format!("{:?}: {e}", f[8])))?,
                steps_per_level: num(f[9])?,
                leaf_nodes_per_range: num(f[10])?,
            })
        })
        .collect()
}

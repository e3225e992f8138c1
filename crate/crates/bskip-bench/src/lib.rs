//! Benchmark harness for the concurrent block-skiplist index: YCSB-style
//! workload generation plus a multi-threaded measurement driver.

pub mod bench;
pub mod workload;

pub use bench::{
    aggregate, parse_tsv, percentile, run, run_trial, tsv_row, write_tsv, BenchConfig, BenchError,
    TrialResult, TsvRow, TSV_HEADER,
};
pub use workload::{
    mix64, Distribution, LoadKeys, MixName, OpRecord, OpStream, WorkloadSpec, Zipfian,
    DEFAULT_MAX_SCAN_LEN, DEFAULT_ZIPFIAN_THETA,
};

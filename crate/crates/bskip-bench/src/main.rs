use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use bskip_bench::{
    run, tsv_row, write_tsv, BenchConfig, Distribution, MixName, DEFAULT_ZIPFIAN_THETA,
    TSV_HEADER,
};

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadArg {
    Load,
    A,
    B,
    C,
    E,
}

impl From<WorkloadArg> for MixName {
    fn from(w: WorkloadArg) -> MixName {
        match w {
            WorkloadArg::Load => MixName::Load,
            WorkloadArg::A => MixName::A,
            WorkloadArg::B => MixName::B,
            WorkloadArg::C => MixName::C,
            WorkloadArg::E => MixName::E,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Zipfian,
}

/// Workload driver for the block-skiplist index. Runs a load phase and,
/// for the run workloads, a measured operation phase, then prints one TSV
/// row of throughput, latency percentiles, and structural counters.
#[derive(Parser)]
#[command(name = "bskip-bench", version)]
struct Cli {
    /// Operation mix: load (pure inserts), a (50/50 find/insert),
    /// b (95/5), c (find-only), e (5% insert, 95% short ranges).
    #[arg(long, value_enum, default_value = "c")]
    workload: WorkloadArg,
    /// Run-phase key distribution over the loaded population.
    #[arg(long, value_enum, default_value = "uniform")]
    dist: DistArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Elements inserted in the load phase.
    #[arg(long, default_value_t = 1_000_000)]
    records: u64,
    /// Operations executed in the run phase (split across threads).
    #[arg(long, default_value_t = 1_000_000)]
    ops: u64,
    /// Node size in bytes; 16 bytes per element.
    #[arg(long, default_value_t = 2048)]
    node_bytes: usize,
    /// Scale factor c in the promotion probability 1/(c*B).
    #[arg(long, default_value_t = 0.5)]
    c_factor: f64,
    #[arg(long, default_value_t = 5)]
    max_height: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Measured trials; the reported row is the per-metric median.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Skip the discarded warm-up trial.
    #[arg(long)]
    no_warmup: bool,
    /// Write the TSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the index structure after every trial.
    #[arg(long)]
    audit: bool,
    /// Zipfian skew parameter.
    #[arg(long, default_value_t = DEFAULT_ZIPFIAN_THETA)]
    theta: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = BenchConfig {
        mix: cli.workload.into(),
        distribution: match cli.dist {
            DistArg::Uniform => Distribution::Uniform,
            DistArg::Zipfian => Distribution::Zipfian { theta: cli.theta },
        },
        threads: cli.threads,
        record_count: cli.records,
        operation_count: cli.ops,
        node_bytes: cli.node_bytes,
        c_factor: cli.c_factor,
        max_height: cli.max_height,
        seed: cli.seed,
        trials: cli.trials,
        warmup: !cli.no_warmup,
        audit: cli.audit,
    };
    let result = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bskip-bench: {e}");
            return ExitCode::FAILURE;
        }
    };
    let row = tsv_row(&config, &result);
    match &cli.out {
        Some(path) => {
            if let Err(e) = write_tsv(path, std::slice::from_ref(&row)) {
                eprintln!("bskip-bench: {e}");
                return ExitCode::FAILURE;
            }
        }
        None => println!("{TSV_HEADER}\n{row}"),
    }
    ExitCode::SUCCESS
}

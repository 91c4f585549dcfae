//! Command-line front of the harness: generate workloads, drive runs,
//! sweep a dimension, and re-verify recorded traces.

use anyhow::Context;
use clap::{Parser, Subcommand};
use sieve_bench::{
    gen_workload, oracle, report, runner, sweep as sweep_mod, Dimension, RunConfig, SweepConfig,
    Trace, Workload, WorkloadProfile,
};
use std::path::PathBuf;
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Workload generator, load driver, and verifier for the sieve broker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a workload profile into a concrete, reproducible workload.
    Gen {
        /// Profile JSON (see WorkloadProfile).
        #[arg(long)]
        profile: PathBuf,
        /// Where the generated workload JSON lands.
        #[arg(long)]
        out: PathBuf,
        /// Also write the group assignments in the matcher's groups-file
        /// format, for wiring the cluster by hand.
        #[arg(long)]
        groups_out: Option<PathBuf>,
    },
    /// Drive a generated workload against a running cluster.
    Run {
        /// Workload JSON produced by `gen`.
        #[arg(long)]
        workload: PathBuf,
        /// Load balancer base URL.
        #[arg(long)]
        lb: String,
        /// Override the workload's publication rate (pubs/s).
        #[arg(long)]
        rate: Option<f64>,
        /// Override the workload's send window (seconds).
        #[arg(long)]
        duration: Option<f64>,
        /// Where the report JSON lands.
        #[arg(long)]
        report: PathBuf,
        /// Also append the report as one CSV row (with header).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also record the full trace for later `verify`.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Permit a non-loopback cluster; latency then spans two clocks and
        /// is only meaningful if the hosts are calibrated.
        #[arg(long)]
        assume_synced_clocks: bool,
    },
    /// Measure saturated throughput across values of one dimension.
    Sweep {
        /// Profile JSON the workload is generated from.
        #[arg(long)]
        profile: PathBuf,
        /// matchers | subscriptions | workers | permission-filtering | rate
        #[arg(long)]
        dimension: Dimension,
        /// Comma-separated dimension values, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Directory for per-point JSON reports and the summary CSV.
        #[arg(long)]
        out_dir: PathBuf,
        /// Send window per ladder rung (seconds).
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// First rung of the rate ladder (pubs/s).
        #[arg(long, default_value_t = 50.0)]
        base_rate: f64,
        /// Ladder length cap.
        #[arg(long, default_value_t = 10)]
        max_rungs: usize,
    },
    /// Recompute expected deliveries for a recorded trace and diff them
    /// against what was observed.
    Verify {
        /// Trace JSON written by `run --trace`.
        #[arg(long)]
        trace: PathBuf,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();

    match Cli::parse().command {
        Command::Gen {
            profile,
            out,
            groups_out,
        } => {
            let profile: WorkloadProfile = read_json(&profile)?;
            let workload = gen_workload(&profile)?;
            write_json(&out, &workload)?;
            eprintln!(
                "generated {} subscriptions, {} policies, {} publications -> {}",
                workload.subscriptions.len(),
                workload.policies.len(),
                workload.publications.count,
                out.display()
            );
            if let Some(path) = groups_out {
                workload
                    .write_groups_file(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("groups file -> {}", path.display());
            }
        }
        Command::Run {
            workload,
            lb,
            rate,
            duration,
            report: report_path,
            csv,
            trace,
            assume_synced_clocks,
        } => {
            let workload: Workload = read_json(&workload)?;
            let mut cfg = RunConfig::from_workload(&lb, &workload);
            if let Some(rate) = rate {
                cfg.rate = rate;
            }
            if let Some(secs) = duration {
                cfg.duration = Duration::from_secs_f64(secs);
            }
            cfg.assume_synced_clocks = assume_synced_clocks;
            let outcome = runner::run_load(&workload, &cfg).await?;
            outcome.report.write_json(&report_path)?;
            eprintln!("report -> {}", report_path.display());
            if let Some(path) = &csv {
                let file = std::fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))?;
                let label = format!("{}", cfg.rate);
                report::write_csv(file, [(label.as_str(), &outcome.report)])?;
                eprintln!("csv -> {}", path.display());
            }
            if let Some(path) = &trace {
                write_json(path, &outcome.trace)?;
                eprintln!("trace -> {}", path.display());
            }
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
            if !outcome.report.correctness.is_exact() {
                eprintln!("correctness: deliveries diverged from expectation (see report)");
                std::process::exit(1);
            }
        }
        Command::Sweep {
            profile,
            dimension,
            values,
            out_dir,
            duration,
            base_rate,
            max_rungs,
        } => {
            let profile: WorkloadProfile = read_json(&profile)?;
            let mut cfg = SweepConfig::new(dimension, values);
            cfg.base_rate = base_rate;
            cfg.rung_duration = Duration::from_secs_f64(duration);
            cfg.max_rungs = max_rungs;
            cfg.out_dir = Some(out_dir.clone());
            let outcome = sweep_mod::sweep(&profile, &cfg).await?;
            for point in &outcome.points {
                println!(
                    "{} = {}: saturated at {:.1} deliveries/s (offered {:.1} pubs/s, p99 {:.1} ms)",
                    dimension,
                    point.dimension_value,
                    point.saturation.saturated_match_rate,
                    point.saturation.saturating_offered_rate,
                    point.report.latency.p99_ms
                );
            }
            for (value, error) in &outcome.failures {
                eprintln!("{dimension} = {value}: FAILED: {error}");
            }
            eprintln!("reports -> {}", out_dir.display());
            if !outcome.failures.is_empty() {
                std::process::exit(1);
            }
        }
        Command::Verify { trace } => {
            let trace: Trace = read_json(&trace)?;
            let record = oracle::verify(&trace);
            println!("{}", serde_json::to_string_pretty(&record)?);
            if !record.is_exact() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> anyhow::Result<()> {
    let json = serde_json::to_vec_pretty(value)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

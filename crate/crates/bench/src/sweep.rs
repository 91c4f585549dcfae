//! Saturation search over one cluster dimension.
//!
//! For each value of the chosen dimension the sweep boots a fresh local
//! cluster, then climbs a rate ladder (×1.5 per rung) until the measured
//! match throughput plateaus: the ladder stops at rung *i* once
//! `measure[i] < 1.05 × measure[i−2]`, i.e. less than 5% gain across two
//! rate steps. The plateau's peak is reported as the saturated throughput.
//!
//! The `rate` dimension skips the search — each value *is* the offered
//! rate, run once.

use crate::generate::{gen_workload, GenerateError};
use crate::local::{ClusterSpec, LocalCluster};
use crate::profile::WorkloadProfile;
use crate::report::{self, BenchReport};
use crate::runner::{run_load, RunConfig, RunError};
use crate::workload::Workload;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;
use thiserror::Error;

/// Which knob the sweep turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Number of matcher partitions.
    Matchers,
    /// Number of registered subscriptions; the workload is regenerated for
    /// each value (same seed, same per-subscription shape).
    Subscriptions,
    /// Matching worker threads per matcher.
    Workers,
    /// Permission filtering off (`0`) or on (`1`).
    PermissionFiltering,
    /// Offered publication rate — direct runs, no saturation search.
    Rate,
}

impl Dimension {
    /// How a value of this dimension is written in reports.
    pub fn render(&self, value: f64) -> String {
        match self {
            Dimension::PermissionFiltering => {
                if value != 0.0 { "on" } else { "off" }.to_string()
            }
            Dimension::Rate => format!("{value}"),
            _ => format!("{}", value as u64),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Matchers => "matchers",
            Dimension::Subscriptions => "subscriptions",
            Dimension::Workers => "workers",
            Dimension::PermissionFiltering => "permission-filtering",
            Dimension::Rate => "rate",
        };
        f.write_str(name)
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "matchers" => Ok(Dimension::Matchers),
            "subscriptions" | "subs" => Ok(Dimension::Subscriptions),
            "workers" => Ok(Dimension::Workers),
            "permission-filtering" | "permission_filtering" | "policies" => {
                Ok(Dimension::PermissionFiltering)
            }
            "rate" => Ok(Dimension::Rate),
            other => Err(format!(
                "unknown dimension {other:?} (expected matchers, subscriptions, \
                 workers, permission-filtering, or rate)"
            )),
        }
    }
}

/// Sweep parameters beyond the profile itself.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dimension: Dimension,
    /// Dimension values to measure, in order.
    pub values: Vec<f64>,
    /// Cluster shape shared by every point (the swept knob is overridden).
    pub base_cluster: ClusterSpec,
    /// First rung of the rate ladder, pubs/s.
    pub base_rate: f64,
    /// Send window per rung.
    pub rung_duration: Duration,
    /// Ladder length cap.
    pub max_rungs: usize,
    /// Where per-point JSON reports and the summary CSV land; `None` keeps
    /// everything in memory.
    pub out_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(dimension: Dimension, values: Vec<f64>) -> Self {
        SweepConfig {
            dimension,
            values,
            base_cluster: ClusterSpec::default(),
            base_rate: 50.0,
            rung_duration: Duration::from_secs(5),
            max_rungs: 10,
            out_dir: None,
        }
    }
}

/// Outcome of one rate-ladder climb.
#[derive(Debug, Clone)]
pub struct SaturationResult {
    /// Peak measured match throughput, deliveries/s.
    pub saturated_match_rate: f64,
    /// Offered rate at which the peak was measured.
    pub saturating_offered_rate: f64,
    /// `(offered rate, measured match rate)` per rung, in climb order.
    pub ladder: Vec<(f64, f64)>,
}

/// One measured dimension value.
pub struct SweepPoint {
    pub dimension_value: String,
    pub saturation: SaturationResult,
    /// Full report of the peak rung.
    pub report: BenchReport,
}

/// A finished sweep: measured points plus any values that failed outright.
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    /// `(dimension value, error)` for points that could not be measured.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("workload generation failed: {0}")]
    Generate(#[from] GenerateError),
    #[error("sweep needs at least one dimension value")]
    NoValues,
    #[error("writing reports: {0}")]
    Write(#[from] anyhow::Error),
}

/// Climbs the rate ladder against one live cluster and returns the plateau
/// plus the full report of the peak rung.
pub async fn find_saturation(
    workload: &Workload,
    lb_url: &str,
    base_rate: f64,
    rung_duration: Duration,
    max_rungs: usize,
) -> Result<(SaturationResult, BenchReport), RunError> {
    let mut ladder: Vec<(f64, f64)> = Vec::new();
    let mut reports: Vec<BenchReport> = Vec::new();
    let mut rate = base_rate;
    for rung in 0..max_rungs.max(1) {
        let cfg = RunConfig {
            lb_url: lb_url.to_string(),
            rate,
            duration: rung_duration,
            assume_synced_clocks: false,
        };
        let outcome = run_load(workload, &cfg).await?;
        // A workload without subscribers has no match throughput to
        // saturate; fall back to the accepted publish rate.
        let measure = if workload.subscriptions.is_empty() {
            outcome.report.achieved_publish_rate
        } else {
            outcome.report.subscriber_observed_match_rate
        };
        tracing::info!(rung, rate, measure, "ladder rung measured");
        ladder.push((rate, measure));
        reports.push(outcome.report);
        if rung >= 2 && ladder[rung].1 < ladder[rung - 2].1 * 1.05 {
            break;
        }
        rate *= 1.5;
    }
    let peak = ladder
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("ladder has at least one rung");
    let saturation = SaturationResult {
        saturated_match_rate: ladder[peak].1,
        saturating_offered_rate: ladder[peak].0,
        ladder,
    };
    Ok((saturation, reports.swap_remove(peak)))
}

/// Runs the whole sweep. Points that fail are recorded and skipped; the
/// sweep itself fails only when nothing can be generated or written.
pub async fn sweep(
    profile: &WorkloadProfile,
    cfg: &SweepConfig,
) -> Result<SweepOutcome, SweepError> {
    if cfg.values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let base_workload = match cfg.dimension {
        // Regenerated per value below.
        Dimension::Subscriptions => None,
        _ => Some(gen_workload(profile)?),
    };

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &value in &cfg.values {
        let label = cfg.dimension.render(value);
        tracing::info!(dimension = %cfg.dimension, value = %label, "sweep point starting");
        match measure_point(profile, cfg, value, base_workload.as_ref()).await {
            Ok(point) => points.push(point),
            Err(err) => {
                tracing::warn!(value = %label, error = %err, "sweep point failed");
                failures.push((label, err));
            }
        }
    }

    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, cfg, &points)?;
    }
    Ok(SweepOutcome { points, failures })
}

async fn measure_point(
    profile: &WorkloadProfile,
    cfg: &SweepConfig,
    value: f64,
    base_workload: Option<&Workload>,
) -> Result<SweepPoint, String> {
    let regenerated;
    let workload = match cfg.dimension {
        Dimension::Subscriptions => {
            let mut scaled = profile.clone();
            scaled.num_subscriptions = value as usize;
            regenerated = gen_workload(&scaled).map_err(|e| e.to_string())?;
            &regenerated
        }
        _ => base_workload.expect("base workload generated for this dimension"),
    };

    let mut spec = cfg.base_cluster.clone();
    spec.groups = workload.groups.clone();
    match cfg.dimension {
        Dimension::Matchers => spec.matchers = value as usize,
        Dimension::Workers => spec.worker_count = value as usize,
        Dimension::PermissionFiltering => spec.permission_filtering = value != 0.0,
        Dimension::Subscriptions | Dimension::Rate => {}
    }

    let cluster = LocalCluster::start(&spec).await.map_err(|e| e.to_string())?;
    let url = cluster.url();
    let result = match cfg.dimension {
        Dimension::Rate => {
            let run_cfg = RunConfig {
                lb_url: url.clone(),
                rate: value,
                duration: cfg.rung_duration,
                assume_synced_clocks: false,
            };
            run_load(workload, &run_cfg).await.map(|outcome| {
                let measure = outcome.report.subscriber_observed_match_rate;
                SweepPoint {
                    dimension_value: cfg.dimension.render(value),
                    saturation: SaturationResult {
                        saturated_match_rate: measure,
                        saturating_offered_rate: value,
                        ladder: vec![(value, measure)],
                    },
                    report: outcome.report,
                }
            })
        }
        _ => find_saturation(
            workload,
            &url,
            cfg.base_rate,
            cfg.rung_duration,
            cfg.max_rungs,
        )
        .await
        .map(|(saturation, report)| SweepPoint {
            dimension_value: cfg.dimension.render(value),
            saturation,
            report,
        }),
    };
    cluster.shutdown().await;
    result.map_err(|e| e.to_string())
}

fn write_outputs(
    dir: &std::path::Path,
    cfg: &SweepConfig,
    points: &[SweepPoint],
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for point in points {
        let path = dir.join(format!("{}-{}.json", cfg.dimension, point.dimension_value));
        point.report.write_json(&path)?;
    }
    let csv_path = dir.join(format!("sweep-{}.csv", cfg.dimension));
    let file = std::fs::File::create(&csv_path)?;
    report::write_csv(
        file,
        points
            .iter()
            .map(|p| (p.dimension_value.as_str(), &p.report)),
    )?;
    Ok(())
}

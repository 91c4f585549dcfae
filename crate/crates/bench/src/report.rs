//! Run reports: throughput, latency percentiles, per-matcher counters,
//! correctness — written as JSON documents and CSV rows.

use crate::trace::CorrectnessRecord;
use serde::{Deserialize, Serialize};
use sieve_core::wire::MatcherStats;
use std::io::Write;
use std::path::Path;

/// Latency distribution of one run, milliseconds, measured from the
/// publication's scheduled send time to subscriber receipt.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub samples: u64,
}

impl LatencySummary {
    /// Summarizes raw samples (any order). Zero samples summarize to zeros.
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return LatencySummary::default();
        }
        samples.sort_unstable_by(f64::total_cmp);
        LatencySummary {
            p50_ms: percentile(&samples, 0.50),
            p90_ms: percentile(&samples, 0.90),
            p99_ms: percentile(&samples, 0.99),
            max_ms: *samples.last().expect("non-empty"),
            samples: samples.len() as u64,
        }
    }
}

/// Nearest-rank percentile of an ascending-sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample set");
    assert!((0.0..=1.0).contains(&q));
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.saturating_sub(1).min(sorted.len() - 1)]
}

/// Everything measured in one load run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    /// Requested publication rate, pubs/s.
    pub offered_rate: f64,
    /// Fully acknowledged publications per second of send window.
    pub achieved_publish_rate: f64,
    /// Deliveries observed per second, counted until the last frame arrived —
    /// a backlog that keeps draining after the send window widens the
    /// denominator, so this is sustained (not burst) throughput.
    pub subscriber_observed_match_rate: f64,
    pub latency: LatencySummary,
    /// `GET /stats` of every matcher after the run drained.
    pub per_matcher: Vec<MatcherStats>,
    pub correctness: CorrectnessRecord,
    /// Informational: harness-process CPU over the run. Includes the broker
    /// itself when the cluster runs in-process.
    pub cpu_note: String,
    pub publications_sent: u64,
    /// Publications every matcher acknowledged (plain 202).
    pub accepted: u64,
    /// Publications some matcher missed (207 multi-status).
    pub partial: u64,
    /// Publications refused outright or failed in transit.
    pub rejected: u64,
    /// Wall-clock seconds from first scheduled send to the last observation.
    pub run_seconds: f64,
}

/// The normative CSV schema shared by run reports and sweep summaries.
pub const CSV_HEADER: &str =
    "dimension_value,offered_rate,achieved_rate,match_rate,p50_ms,p90_ms,p99_ms,missing,duplicates";

/// One CSV row in the normative schema.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    dimension_value: &'a str,
    offered_rate: f64,
    achieved_rate: f64,
    match_rate: f64,
    p50_ms: f64,
    p90_ms: f64,
    p99_ms: f64,
    missing: u64,
    duplicates: u64,
}

impl BenchReport {
    pub fn write_json(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn csv_row<'a>(&'a self, dimension_value: &'a str) -> CsvRow<'a> {
        CsvRow {
            dimension_value,
            offered_rate: self.offered_rate,
            achieved_rate: self.achieved_publish_rate,
            match_rate: self.subscriber_observed_match_rate,
            p50_ms: self.latency.p50_ms,
            p90_ms: self.latency.p90_ms,
            p99_ms: self.latency.p99_ms,
            missing: self.correctness.missing,
            duplicates: self.correctness.duplicates,
        }
    }
}

/// Writes reports as CSV under the normative header; `dimension_value` labels
/// each row (the swept value, or empty for a standalone run).
pub fn write_csv<'a, W, I>(out: W, rows: I) -> anyhow::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a BenchReport)>,
{
    let mut writer = csv::Writer::from_writer(out);
    for (dimension_value, report) in rows {
        writer.serialize(report.csv_row(dimension_value))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(offered: f64) -> BenchReport {
        BenchReport {
            offered_rate: offered,
            achieved_publish_rate: offered * 0.99,
            subscriber_observed_match_rate: 42.5,
            latency: LatencySummary {
                p50_ms: 1.0,
                p90_ms: 2.0,
                p99_ms: 3.5,
                max_ms: 9.0,
                samples: 1000,
            },
            per_matcher: vec![],
            correctness: CorrectnessRecord {
                expected_deliveries: 10,
                observed_deliveries: 10,
                missing: 0,
                duplicates: 0,
                extra: 0,
            },
            cpu_note: "test".into(),
            publications_sent: 100,
            accepted: 100,
            partial: 0,
            rejected: 0,
            run_seconds: 10.0,
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&samples, 0.50), 50.0);
        assert_eq!(percentile(&samples, 0.90), 90.0);
        assert_eq!(percentile(&samples, 0.99), 99.0);
        assert_eq!(percentile(&samples, 1.0), 100.0);
        assert_eq!(percentile(&[7.0], 0.5), 7.0);
        assert_eq!(percentile(&[7.0], 0.99), 7.0);
    }

    #[test]
    fn summaries_come_from_unsorted_samples() {
        let summary = LatencySummary::from_samples(vec![5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!(summary.p50_ms, 3.0);
        assert_eq!(summary.max_ms, 5.0);
        assert_eq!(summary.samples, 5);
        let empty = LatencySummary::from_samples(vec![]);
        assert_eq!(empty.samples, 0);
        assert_eq!(empty.p99_ms, 0.0);
    }

    #[test]
    fn csv_uses_the_normative_columns() {
        let a = report(100.0);
        let b = report(150.0);
        let mut out = Vec::new();
        write_csv(&mut out, [("1", &a), ("2", &b)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,100.0,99.0,42.5,1.0,2.0,3.5,0,0"), "{row}");
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn reports_round_trip_through_json() {
        let r = report(100.0);
        let text = serde_json::to_string(&r).unwrap();
        let back: BenchReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.offered_rate, r.offered_rate);
        assert_eq!(back.correctness, r.correctness);
    }
}

//! The load driver: registers a workload against a cluster, publishes on an
//! open-loop fixed-rate grid, records every delivery, drains, and reports.
//!
//! Send times sit on a fixed grid (`start + i/rate`) decided before the run —
//! a slow response never delays the next send, and every publication carries
//! its *scheduled* time in `x-send-ts-ms`. Latency therefore includes any
//! backlog the sender itself accumulated, which is the whole point: the
//! classic closed-loop alternative under-reports latency exactly when the
//! system saturates (coordinated omission).

use crate::oracle;
use crate::report::{BenchReport, LatencySummary};
use crate::trace::{Trace, TraceDelivery, TracePolicy, TracePub, TraceSub};
use crate::workload::{publication_body, Workload};
use sieve_client::{Client, ClientError, ClientIdentity};
use sieve_core::wire::{header, MatcherStats, PublishAck};
use sieve_core::{PartitionMap, PolicyId, SubId};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime};
use thiserror::Error;
use tokio::sync::{mpsc, watch, Semaphore};
use tokio::task::JoinSet;

/// Parameters of one measured run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Base URL of the load balancer.
    pub lb_url: String,
    /// Offered publication rate, pubs/s.
    pub rate: f64,
    /// Length of the send window.
    pub duration: Duration,
    /// Allow a non-loopback cluster. Latency is measured across clocks then;
    /// only set this after calibrating the hosts against each other.
    pub assume_synced_clocks: bool,
}

impl RunConfig {
    /// A run against `lb_url` with the workload's default rate and duration.
    pub fn from_workload(lb_url: impl Into<String>, workload: &Workload) -> Self {
        RunConfig {
            lb_url: lb_url.into(),
            rate: workload.publications.rate,
            duration: Duration::from_secs_f64(workload.profile.duration_secs),
            assume_synced_clocks: false,
        }
    }
}

/// Why a run could not be carried out (distinct from a run that measured
/// poor numbers, which is a result).
#[derive(Debug, Error)]
pub enum RunError {
    #[error(
        "cluster {0} is not on loopback; end-to-end latency would mix two \
         clocks (pass assume_synced_clocks after calibrating the hosts)"
    )]
    ClockSkewRisk(String),
    #[error("cluster unreachable: {0}")]
    Unreachable(String),
    #[error("{rejected} of the first {attempted} publishes were rejected (>1%): aborting, the cluster is refusing load")]
    WarmupRejects { attempted: u64, rejected: u64 },
    #[error("registering the workload failed: {0}")]
    Registration(#[from] ClientError),
    #[error("rate and duration must be positive")]
    BadParameters,
}

/// Everything a run produces.
pub struct RunOutcome {
    pub report: BenchReport,
    pub trace: Trace,
}

/// Unix milliseconds now, on the same clock the services stamp with.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .expect("clock after 1970")
        .as_millis() as u64
}

/// Cap on in-flight publish requests; sends that would exceed it wait for a
/// permit (the wait is visible in latency — scheduled timestamps are already
/// stamped).
const MAX_IN_FLIGHT_PUBLISHES: usize = 256;

/// How long after the send window the run waits for queues to empty and the
/// last frame to arrive.
const DRAIN_DEADLINE: Duration = Duration::from_secs(30);

struct DeliveryRecord {
    sub_id: SubId,
    pub_id: sieve_core::PubId,
    latency_ms: f64,
    received_ms: u64,
}

enum PubOutcome {
    Accepted(PublishAck),
    Partial(PublishAck),
    Rejected,
}

struct PubRecord {
    body: String,
    outcome: PubOutcome,
}

/// Runs the workload: warm-up barrier (everything registered and attached),
/// fixed-grid open-loop load, drain, verification, teardown.
pub async fn run_load(workload: &Workload, cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    if !(cfg.rate > 0.0 && cfg.rate.is_finite()) || cfg.duration.is_zero() {
        return Err(RunError::BadParameters);
    }
    if !is_loopback_url(&cfg.lb_url) && !cfg.assume_synced_clocks {
        return Err(RunError::ClockSkewRisk(cfg.lb_url.clone()));
    }

    let http = reqwest::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .expect("reqwest client builds");
    let lb = cfg.lb_url.trim_end_matches('/').to_string();

    // The routing table doubles as the stats-polling address list.
    let map: PartitionMap = http
        .get(format!("{lb}/cluster"))
        .send()
        .await
        .map_err(|e| RunError::Unreachable(e.to_string()))?
        .json()
        .await
        .map_err(|e| RunError::Unreachable(format!("bad partition map: {e}")))?;
    let baseline = fetch_stats(&http, &map)
        .await
        .map_err(RunError::Unreachable)?;
    let permission_filtering = baseline.first().map_or(true, |s| s.permission_filtering);
    let baseline_delivered: u64 = baseline.iter().map(|s| s.delivered).sum();

    // ---- Warm-up: install policies, register and attach every subscription.
    let publisher = Client::new(&lb, ClientIdentity::hash(workload.publisher.clone()))?;
    let mut policy_ids: Vec<PolicyId> = Vec::with_capacity(workload.policies.len());
    for policy in &workload.policies {
        let ack = publisher
            .install_policy(policy.pub_constraints.clone(), &policy.group)
            .await?;
        policy_ids.push(ack.policy_id);
    }

    let mut trace_subs = Vec::with_capacity(workload.subscriptions.len());
    let mut clients: Vec<(Client, SubId)> = Vec::with_capacity(workload.subscriptions.len());
    let (event_tx, event_rx) = mpsc::unbounded_channel::<DeliveryRecord>();
    let (cancel_tx, cancel_rx) = watch::channel(false);
    let delivered_count = Arc::new(AtomicU64::new(0));
    let mut receivers = JoinSet::new();

    for generated in &workload.subscriptions {
        let client = Client::new(&lb, ClientIdentity::hash(generated.auth_hash.clone()))?;
        let mut handle = client.subscribe(generated.constraints.clone()).await?;
        trace_subs.push(TraceSub {
            sub_id: handle.sub_id().clone(),
            auth_hash: generated.auth_hash.clone(),
            constraints: generated.constraints.clone(),
        });
        clients.push((client, handle.sub_id().clone()));

        let events = event_tx.clone();
        let counter = Arc::clone(&delivered_count);
        let mut cancel = cancel_rx.clone();
        receivers.spawn(async move {
            loop {
                tokio::select! {
                    _ = cancel.changed() => break,
                    received = handle.recv() => match received {
                        Ok(envelope) => {
                            let received_at = now_ms();
                            let sent_at = envelope.send_ts_ms.unwrap_or(received_at);
                            counter.fetch_add(1, Ordering::Relaxed);
                            let record = DeliveryRecord {
                                sub_id: envelope.sub_id,
                                pub_id: envelope.pub_id,
                                latency_ms: received_at.saturating_sub(sent_at) as f64,
                                received_ms: received_at,
                            };
                            if events.send(record).is_err() {
                                break;
                            }
                        }
                        Err(_) => break,
                    },
                }
            }
        });
    }
    drop(event_tx);

    // ---- Open-loop send window.
    let cpu_before = process_cpu_seconds();
    let count = (cfg.rate * cfg.duration.as_secs_f64()).ceil() as u64;
    let period = Duration::from_secs_f64(1.0 / cfg.rate);
    let warmup_sends = (count / 5).max(50).min(count);
    let in_flight = Arc::new(Semaphore::new(MAX_IN_FLIGHT_PUBLISHES));
    let attempted = Arc::new(AtomicU64::new(0));
    let rejected = Arc::new(AtomicU64::new(0));
    let last_ack_ms = Arc::new(AtomicU64::new(0));
    let universe = Arc::new(workload.profile.attribute_universe.clone());
    let pub_seed = workload.publications.seed;
    let publish_url = format!("{lb}/publications");
    let auth = workload.publisher.to_string();

    let start_wall = now_ms();
    let start = Instant::now();
    let mut publishers: JoinSet<PubRecord> = JoinSet::new();
    for index in 0..count {
        let target = start + period.mul_f64(index as f64);
        tokio::time::sleep_until(target.into()).await;
        let scheduled_ms = start_wall + (period.mul_f64(index as f64)).as_millis() as u64;

        let http = http.clone();
        let url = publish_url.clone();
        let auth = auth.clone();
        let universe = Arc::clone(&universe);
        let permit_pool = Arc::clone(&in_flight);
        let attempted_in_task = Arc::clone(&attempted);
        let rejected_in_task = Arc::clone(&rejected);
        let last_ack = Arc::clone(&last_ack_ms);
        publishers.spawn(async move {
            let _permit = permit_pool.acquire_owned().await.expect("semaphore open");
            let body = publication_body(&universe, pub_seed, index);
            let response = http
                .post(&url)
                .header(header::AUTH_HASH, &auth)
                .header(header::SEND_TS_MS, scheduled_ms)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
                .await;
            attempted_in_task.fetch_add(1, Ordering::Relaxed);
            last_ack.fetch_max(now_ms(), Ordering::Relaxed);
            let outcome = match response {
                Ok(resp) if resp.status() == 202 => match resp.json::<PublishAck>().await {
                    Ok(ack) => PubOutcome::Accepted(ack),
                    Err(_) => PubOutcome::Rejected,
                },
                Ok(resp) if resp.status() == 207 => match resp.json::<PublishAck>().await {
                    Ok(ack) => PubOutcome::Partial(ack),
                    Err(_) => PubOutcome::Rejected,
                },
                _ => PubOutcome::Rejected,
            };
            if matches!(outcome, PubOutcome::Rejected) {
                rejected_in_task.fetch_add(1, Ordering::Relaxed);
            }
            PubRecord { body, outcome }
        });

        // Abort early if the cluster refuses the warm-up load.
        if index < warmup_sends {
            let done = attempted.load(Ordering::Relaxed);
            let bad = rejected.load(Ordering::Relaxed);
            if done >= 50 && bad * 100 > done {
                publishers.abort_all();
                let _ = cancel_tx.send(true);
                while receivers.join_next().await.is_some() {}
                cleanup(&publisher, &policy_ids, &clients).await;
                return Err(RunError::WarmupRejects {
                    attempted: done,
                    rejected: bad,
                });
            }
        }
    }

    let mut pub_records: Vec<PubRecord> = Vec::with_capacity(count as usize);
    while let Some(joined) = publishers.join_next().await {
        if let Ok(record) = joined {
            pub_records.push(record);
        }
    }

    // ---- Drain: queues empty, counter identity restored, totals stable,
    // and every frame the matchers wrote has reached our receive loops.
    let drain_deadline = Instant::now() + DRAIN_DEADLINE;
    let mut previous_delivered = u64::MAX;
    let mut delivered_total = baseline_delivered;
    while Instant::now() < drain_deadline {
        match fetch_stats(&http, &map).await {
            Ok(stats) => {
                let quiescent = stats.iter().all(|s| {
                    s.queue_depth == 0
                        && s.delivered
                            + s.dropped_no_connection
                            + s.dropped_buffer_overflow
                            + s.policy_blocked
                            == s.matched_pairs
                });
                delivered_total = stats.iter().map(|s| s.delivered).sum();
                if quiescent && delivered_total == previous_delivered {
                    break;
                }
                previous_delivered = delivered_total;
            }
            Err(_) => break,
        }
        tokio::time::sleep(Duration::from_millis(150)).await;
    }
    let expected_received = delivered_total - baseline_delivered;
    while Instant::now() < drain_deadline
        && delivered_count.load(Ordering::Relaxed) < expected_received
    {
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let cpu_after = process_cpu_seconds();

    // ---- Teardown: stop receivers, collect their records, unregister.
    let _ = cancel_tx.send(true);
    while receivers.join_next().await.is_some() {}
    let mut deliveries = Vec::new();
    let mut latencies = Vec::new();
    let mut event_rx = event_rx;
    let mut last_delivery_ms = 0u64;
    while let Ok(record) = event_rx.try_recv() {
        latencies.push(record.latency_ms);
        deliveries.push(TraceDelivery {
            sub_id: record.sub_id,
            pub_id: record.pub_id,
        });
        last_delivery_ms = last_delivery_ms.max(record.received_ms);
    }
    let per_matcher = fetch_stats(&http, &map).await.unwrap_or_default();
    cleanup(&publisher, &policy_ids, &clients).await;

    // ---- Assemble.
    let mut accepted = 0u64;
    let mut partial = 0u64;
    let mut rejected_count = 0u64;
    let mut trace_pubs = Vec::with_capacity(pub_records.len());
    for record in pub_records {
        let (ack, fanout_ok) = match record.outcome {
            PubOutcome::Accepted(ack) => {
                accepted += 1;
                (ack, true)
            }
            PubOutcome::Partial(ack) => {
                partial += 1;
                (ack, false)
            }
            PubOutcome::Rejected => {
                rejected_count += 1;
                continue;
            }
        };
        trace_pubs.push(TracePub {
            pub_id: ack.pub_id,
            body: serde_json::value::RawValue::from_string(record.body)
                .expect("generated bodies are valid JSON"),
            fanout_ok,
        });
    }

    let trace = Trace {
        permission_filtering,
        subscriptions: trace_subs,
        policies: workload
            .policies
            .iter()
            .map(|p| TracePolicy {
                pub_constraints: p.pub_constraints.clone(),
                group: p.group.clone(),
            })
            .collect(),
        groups: workload.groups.clone(),
        publications: trace_pubs,
        deliveries,
    };

    let send_window = cfg.duration.as_secs_f64();
    let publish_span =
        ((last_ack_ms.load(Ordering::Relaxed).max(start_wall) - start_wall) as f64 / 1000.0)
            .max(send_window);
    let delivery_span =
        ((last_delivery_ms.max(start_wall) - start_wall) as f64 / 1000.0).max(send_window);
    let correctness = oracle::verify(&trace);
    let report = BenchReport {
        offered_rate: cfg.rate,
        achieved_publish_rate: accepted as f64 / publish_span,
        subscriber_observed_match_rate: trace.deliveries.len() as f64 / delivery_span,
        latency: LatencySummary::from_samples(latencies),
        per_matcher,
        correctness,
        cpu_note: cpu_note(cpu_before, cpu_after, delivery_span),
        publications_sent: count,
        accepted,
        partial,
        rejected: rejected_count,
        run_seconds: delivery_span,
    };
    Ok(RunOutcome { report, trace })
}

/// Removes everything the run registered, best effort.
async fn cleanup(publisher: &Client, policy_ids: &[PolicyId], clients: &[(Client, SubId)]) {
    for policy_id in policy_ids {
        let _ = publisher.remove_policy(policy_id).await;
    }
    for (client, sub_id) in clients {
        let _ = client.unsubscribe(sub_id).await;
    }
}

async fn fetch_stats(
    http: &reqwest::Client,
    map: &PartitionMap,
) -> Result<Vec<MatcherStats>, String> {
    let mut all = Vec::with_capacity(map.matchers.len());
    for endpoint in &map.matchers {
        let stats: MatcherStats = http
            .get(format!("{}/stats", endpoint.address.trim_end_matches('/')))
            .send()
            .await
            .map_err(|e| format!("matcher {}: {e}", endpoint.id))?
            .json()
            .await
            .map_err(|e| format!("matcher {} stats: {e}", endpoint.id))?;
        all.push(stats);
    }
    Ok(all)
}

fn is_loopback_url(url: &str) -> bool {
    let rest = url
        .trim_start_matches("http://")
        .trim_start_matches("https://");
    let host = rest
        .split(['/', '?'])
        .next()
        .unwrap_or("")
        .rsplit_once(':')
        .map_or(rest.split(['/', '?']).next().unwrap_or(""), |(h, _)| h);
    matches!(host, "localhost" | "[::1]") || host.starts_with("127.")
}

/// CPU seconds this process has used (user + system). Linux only; elsewhere
/// the note degrades gracefully.
fn process_cpu_seconds() -> Option<f64> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    // Fields 14 and 15 (1-indexed, after the parenthesized command name) are
    // utime and stime in clock ticks.
    let after_command = stat.rsplit_once(')')?.1;
    let mut fields = after_command.split_ascii_whitespace();
    let utime: f64 = fields.nth(11)?.parse().ok()?;
    let stime: f64 = fields.next()?.parse().ok()?;
    const TICKS_PER_SEC: f64 = 100.0;
    Some((utime + stime) / TICKS_PER_SEC)
}

fn cpu_note(before: Option<f64>, after: Option<f64>, span_secs: f64) -> String {
    match (before, after) {
        (Some(b), Some(a)) if span_secs > 0.0 => format!(
            "harness process used {:.2} CPU s over {:.2} wall s (~{:.0}% of one core); \
             informational only — includes the broker when the cluster is in-process",
            a - b,
            span_secs,
            (a - b) / span_secs * 100.0
        ),
        _ => "process CPU sampling unavailable on this platform".to_string(),
    }
}

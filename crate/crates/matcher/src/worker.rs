//! Matching workers: drain the publication queue, evaluate subscriptions,
//! and hand envelopes to connection buffers.
//!
//! Workers are plain OS threads — matching is CPU-bound and must not stall
//! the async ingress. Each publication is flattened once, evaluated against
//! a consistent snapshot of the store ([`matching_view`]), permission-checked
//! per subscriber, serialized per matched pair, and pushed to the pair's
//! connection buffer. Every matched pair ends up in exactly one counter:
//! `delivered`, `dropped_no_connection`, `dropped_buffer_overflow`, or
//! `policy_blocked`.
//!
//! [`matching_view`]: sieve_store::SubscriptionStore::matching_view

use crate::registry::PushOutcome;
use crate::state::{Job, MatcherState};
use crossbeam_channel::Receiver;
use serde_json::value::RawValue;
use sieve_core::wire::DeliveryEnvelope;
use sieve_core::{flatten, permission_check};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread;

pub fn spawn_workers(
    state: Arc<MatcherState>,
    rx: Receiver<Job>,
) -> Vec<thread::JoinHandle<()>> {
    (0..state.config.worker_count)
        .map(|i| {
            let state = Arc::clone(&state);
            let rx = rx.clone();
            thread::Builder::new()
                .name(format!("match-{i}"))
                .spawn(move || worker_loop(state, rx))
                .expect("spawn matching worker")
        })
        .collect()
}

fn worker_loop(state: Arc<MatcherState>, rx: Receiver<Job>) {
    // Exits when every sender is dropped (close_queue + last probe).
    while let Ok(job) = rx.recv() {
        process(&state, job);
    }
}

fn process(state: &Arc<MatcherState>, job: Job) {
    let attrs = match flatten(&job.doc) {
        Ok(attrs) => attrs,
        Err(err) => {
            // Ingress validates shape, but flattening can still fail on
            // key collisions; the publication is rejected, not matched.
            tracing::debug!(pub_id = %job.pub_id, %err, "dropping unflattenable publication");
            state.counters.rejected.fetch_add(1, Ordering::Relaxed);
            return;
        }
    };

    let view = state.store.matching_view(&attrs);
    state
        .counters
        .matched_pairs
        .fetch_add(view.pairs.len() as u64, Ordering::Relaxed);
    if view.pairs.is_empty() {
        return;
    }

    let filtering = state.permission_filtering.load(Ordering::Relaxed);
    let raw: Box<RawValue> =
        RawValue::from_string(String::from_utf8_lossy(&job.body).into_owned())
            .expect("ingress-validated publication body is valid JSON");
    let matched_ts = now_ms();

    for (auth_hash, sub_id) in &view.pairs {
        if filtering {
            state.counters.policy_checked.fetch_add(1, Ordering::Relaxed);
            let groups = state.groups_of(auth_hash);
            if !permission_check(&view.policies, &attrs, groups) {
                state.counters.policy_blocked.fetch_add(1, Ordering::Relaxed);
                continue;
            }
        }

        let envelope = DeliveryEnvelope {
            sub_id: sub_id.clone(),
            pub_id: job.pub_id.clone(),
            publication: raw.clone(),
            matched_ts,
            send_ts_ms: job.send_ts_ms,
        };
        let frame = serde_json::to_string(&envelope).expect("envelope serializes");

        let key = (auth_hash.clone(), sub_id.clone());
        match state.registry.deliver(&key, frame) {
            // The connection's writer counts `delivered` on socket write.
            PushOutcome::Queued => {}
            PushOutcome::QueuedEvicted(n) => {
                state
                    .counters
                    .dropped_buffer_overflow
                    .fetch_add(n, Ordering::Relaxed);
            }
            PushOutcome::NoConnection => {
                state
                    .counters
                    .dropped_no_connection
                    .fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

pub fn now_ms() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_millis() as u64
}

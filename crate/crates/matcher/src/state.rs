//! Shared state of a running matcher: store, connection registry, work queue
//! handle, counters and runtime flags.

use crate::config::MatcherConfig;
use crate::registry::ConnectionRegistry;
use anyhow::Context;
use bytes::Bytes;
use parking_lot::Mutex;
use sieve_core::wire::MatcherStats;
use sieve_core::{AuthHash, PubId};
use sieve_store::SubscriptionStore;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

/// One publication traveling from ingress to the matching workers.
pub struct Job {
    pub pub_id: PubId,
    /// Exact bytes of the published document, embedded verbatim in envelopes.
    pub body: Bytes,
    /// The parsed document (ingress already validated it is a JSON object).
    pub doc: serde_json::Value,
    pub send_ts_ms: Option<u64>,
}

/// Monotonic pipeline counters. Relaxed ordering everywhere: the counters are
/// observability, not synchronization.
#[derive(Default)]
pub struct Counters {
    pub received_pubs: AtomicU64,
    pub rejected: AtomicU64,
    pub matched_pairs: AtomicU64,
    pub delivered: AtomicU64,
    pub dropped_no_connection: AtomicU64,
    pub dropped_buffer_overflow: AtomicU64,
    pub policy_checked: AtomicU64,
    pub policy_blocked: AtomicU64,
}

pub struct MatcherState {
    pub config: MatcherConfig,
    pub store: SubscriptionStore,
    pub registry: ConnectionRegistry,
    pub counters: Counters,
    pub permission_filtering: AtomicBool,
    /// Subscriber group memberships, fixed at startup.
    pub groups: HashMap<AuthHash, HashSet<String>>,
    /// Ingress side of the work queue; taken (dropped) at shutdown so the
    /// workers' receive loop ends.
    queue_tx: Mutex<Option<crossbeam_channel::Sender<Job>>>,
    /// Receiver clone held only for `len()`. It must not be a `Sender`: a
    /// live sender would keep the channel connected past `close_queue` and
    /// the workers would never exit.
    queue_probe: crossbeam_channel::Receiver<Job>,
}

impl MatcherState {
    pub fn new(
        config: MatcherConfig,
        queue_tx: crossbeam_channel::Sender<Job>,
        queue_probe: crossbeam_channel::Receiver<Job>,
    ) -> anyhow::Result<Self> {
        let groups = match &config.groups_file {
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .with_context(|| format!("reading groups file {}", path.display()))?;
                let parsed: sieve_core::wire::GroupsFile =
                    serde_json::from_str(&raw).context("parsing groups file")?;
                parsed
                    .into_iter()
                    .map(|(auth, names)| (auth, names.into_iter().collect()))
                    .collect()
            }
            None => HashMap::new(),
        };
        let store = match config.max_subscriptions {
            Some(limit) => SubscriptionStore::with_capacity(limit),
            None => SubscriptionStore::new(),
        };
        Ok(MatcherState {
            registry: ConnectionRegistry::new(config.conn_buffer),
            permission_filtering: AtomicBool::new(config.permission_filtering),
            groups,
            store,
            counters: Counters::default(),
            queue_probe,
            queue_tx: Mutex::new(Some(queue_tx)),
            config,
        })
    }

    /// Tries to enqueue a publication; `false` means the queue is full (the
    /// caller answers 503) or the node is shutting down.
    pub fn enqueue(&self, job: Job) -> bool {
        let guard = self.queue_tx.lock();
        let Some(tx) = guard.as_ref() else {
            return false;
        };
        match tx.try_send(job) {
            Ok(()) => {
                self.counters
                    .received_pubs
                    .fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(_) => false,
        }
    }

    /// Drops the queue sender so worker threads drain and exit.
    pub fn close_queue(&self) {
        self.queue_tx.lock().take();
    }

    pub fn groups_of(&self, auth: &AuthHash) -> &HashSet<String> {
        static EMPTY: std::sync::OnceLock<HashSet<String>> = std::sync::OnceLock::new();
        self.groups
            .get(auth)
            .unwrap_or_else(|| EMPTY.get_or_init(HashSet::new))
    }

    pub fn stats(&self) -> MatcherStats {
        let c = &self.counters;
        MatcherStats {
            matcher_id: self.config.matcher_id,
            received_pubs: c.received_pubs.load(Ordering::Relaxed),
            rejected: c.rejected.load(Ordering::Relaxed),
            matched_pairs: c.matched_pairs.load(Ordering::Relaxed),
            delivered: c.delivered.load(Ordering::Relaxed),
            dropped_no_connection: c.dropped_no_connection.load(Ordering::Relaxed),
            dropped_buffer_overflow: c.dropped_buffer_overflow.load(Ordering::Relaxed),
            policy_checked: c.policy_checked.load(Ordering::Relaxed),
            policy_blocked: c.policy_blocked.load(Ordering::Relaxed),
            queue_depth: self.queue_probe.len(),
            worker_count: self.config.worker_count,
            generation: self.store.generation(),
            subscription_count: self.store.subscription_count(),
            policy_count: self.store.policy_count(),
            permission_filtering: self.permission_filtering.load(Ordering::Relaxed),
        }
    }
}

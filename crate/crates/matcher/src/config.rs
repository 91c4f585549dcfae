//! Matcher configuration, loaded from a JSON file by the binary or built
//! directly by tests and the local cluster launcher.

use serde::{Deserialize, Serialize};
use sieve_net::{AuthMode, TlsPaths};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Partition index this node serves; also reported in acks and stats.
    pub matcher_id: usize,
    /// REST and WebSocket share this one listener (WS is an HTTP upgrade).
    pub listen_addr: SocketAddr,
    /// Matching worker threads. One worker preserves ingestion order
    /// end-to-end; more workers trade ordering for throughput.
    #[serde(default = "defaults::worker_count")]
    pub worker_count: usize,
    /// Bounded ingress queue; a full queue rejects publications with 503.
    #[serde(default = "defaults::queue_capacity")]
    pub queue_capacity: usize,
    /// Per-connection delivery buffer; overflow drops the oldest envelope.
    #[serde(default = "defaults::conn_buffer")]
    pub conn_buffer: usize,
    /// Initial state of the permission-filtering stage (runtime-toggleable
    /// via `POST /config`).
    #[serde(default = "defaults::yes")]
    pub permission_filtering: bool,
    /// JSON file mapping auth hashes to group names; absent means every
    /// subscriber is anonymous.
    #[serde(default)]
    pub groups_file: Option<PathBuf>,
    /// Refuse registrations beyond this many subscriptions.
    #[serde(default)]
    pub max_subscriptions: Option<usize>,
    #[serde(default)]
    pub auth_mode: AuthMode,
    #[serde(default)]
    pub tls: Option<TlsPaths>,
}

mod defaults {
    pub fn worker_count() -> usize {
        1
    }
    pub fn queue_capacity() -> usize {
        4096
    }
    pub fn conn_buffer() -> usize {
        1024
    }
    pub fn yes() -> bool {
        true
    }
}

impl MatcherConfig {
    /// Plaintext single-worker config on an ephemeral port, the baseline for
    /// tests and local clusters.
    pub fn local(matcher_id: usize) -> Self {
        MatcherConfig {
            matcher_id,
            listen_addr: "127.0.0.1:0".parse().unwrap(),
            worker_count: defaults::worker_count(),
            queue_capacity: defaults::queue_capacity(),
            conn_buffer: defaults::conn_buffer(),
            permission_filtering: defaults::yes(),
            groups_file: None,
            max_subscriptions: None,
            auth_mode: AuthMode::Plain,
            tls: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.worker_count >= 1, "worker_count must be at least 1");
        anyhow::ensure!(self.queue_capacity >= 1, "queue_capacity must be at least 1");
        anyhow::ensure!(self.conn_buffer >= 1, "conn_buffer must be at least 1");
        match self.auth_mode {
            AuthMode::Mtls => {
                let tls = self
                    .tls
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("mtls mode requires the tls section"))?;
                anyhow::ensure!(
                    tls.client_ca.is_some(),
                    "mtls mode requires tls.client_ca so client certificates can be verified"
                );
            }
            AuthMode::Plain => {}
        }
        Ok(())
    }
}

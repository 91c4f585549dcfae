//! Matcher node of the sieve cluster.
//!
//! A matcher owns one partition of the subscription space. Publications
//! arrive over HTTP, pass through a bounded work queue into a pool of
//! matching workers, and matched envelopes leave over per-subscription
//! WebSocket connections. The pipeline stages:
//!
//! 1. **Ingress** (`POST /publications`): validate, assign/propagate the
//!    publication id, enqueue. A full queue answers 503 — backpressure is
//!    explicit, the node never buffers unboundedly.
//! 2. **Match** (worker threads): flatten the document, run one consistent
//!    matching pass against the store, then the permission check per matched
//!    pair.
//! 3. **Deliver**: per-connection bounded buffers, oldest envelope dropped on
//!    overflow; a writer task per connection serializes socket writes.
//!
//! Everything observable is counted in [`sieve_core::wire::MatcherStats`];
//! at quiescence `delivered + dropped_no_connection + dropped_buffer_overflow
//! + policy_blocked == matched_pairs` holds exactly.

pub mod config;
mod http;
mod registry;
mod state;
mod worker;

pub use config::MatcherConfig;
pub use state::MatcherState;

use anyhow::Context;
use std::net::SocketAddr;
use std::sync::Arc;

/// A matcher running inside this process (used by tests and the local
/// cluster launcher; the `sieve-matcher` binary wraps this too).
pub struct RunningMatcher {
    pub addr: SocketAddr,
    pub state: Arc<MatcherState>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    workers: Vec<std::thread::JoinHandle<()>>,
}

impl RunningMatcher {
    /// Base URL of this matcher.
    pub fn url(&self) -> String {
        let scheme = if self.state.config.tls.is_some() {
            "https"
        } else {
            "http"
        };
        format!("{scheme}://{}", self.addr)
    }

    /// Stops the server, drains the workers and closes every subscriber
    /// connection.
    pub async fn shutdown(self) {
        self.server.abort();
        self.state.close_queue();
        self.state.registry.close_all();
        for worker in self.workers {
            let _ = tokio::task::spawn_blocking(move || worker.join()).await;
        }
    }
}

/// Binds the listener and starts serving; resolve the actual address via
/// [`RunningMatcher::addr`] (relevant with port 0).
pub async fn spawn(config: MatcherConfig) -> anyhow::Result<RunningMatcher> {
    config.validate()?;
    let tls = config
        .tls
        .as_ref()
        .map(sieve_net::server_config)
        .transpose()
        .context("loading TLS material")?;

    let (queue_tx, queue_rx) = crossbeam_channel::bounded(config.queue_capacity);
    let state = Arc::new(MatcherState::new(config, queue_tx, queue_rx.clone())?);

    let listener = tokio::net::TcpListener::bind(state.config.listen_addr)
        .await
        .with_context(|| format!("binding {}", state.config.listen_addr))?;
    let addr = listener.local_addr()?;

    let workers = worker::spawn_workers(Arc::clone(&state), queue_rx);
    let app = http::router(Arc::clone(&state));
    let server = tokio::spawn(sieve_net::serve(listener, app, tls));

    tracing::info!(matcher_id = state.config.matcher_id, %addr, "matcher up");
    Ok(RunningMatcher {
        addr,
        state,
        server,
        workers,
    })
}

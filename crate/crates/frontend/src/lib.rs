//! Load-balancer stage of the sieve cluster.
//!
//! The one address clients talk to. Subscriptions are routed to exactly one
//! matcher — the partition hash of their constraints decides which — and the
//! acknowledgement tells the subscriber the owning `matcher_id`.
//! Publications and policies fan out to every matcher concurrently, each
//! upstream call on its own timeout, and the per-matcher outcome is reported
//! back in the acknowledgement. Subscriber WebSockets are relayed verbatim
//! to the owning matcher, close codes included.
//!
//! The process holds no routing state beyond the immutable partition map,
//! so restarting it loses nothing.

pub mod config;
mod http;
mod proxy;

pub use config::FrontendConfig;

use anyhow::Context;
use sieve_core::PartitionMap;
use sieve_net::rustls;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

/// Shared state of a running load balancer.
pub struct FrontendState {
    pub config: FrontendConfig,
    pub partition_map: PartitionMap,
    /// Upstream HTTP client (fan-out and routed calls).
    pub http: reqwest::Client,
    /// TLS configuration for `wss` upstreams, when configured.
    pub ws_tls: Option<Arc<rustls::ClientConfig>>,
}

/// A load balancer running inside this process.
pub struct RunningFrontend {
    pub addr: SocketAddr,
    pub state: Arc<FrontendState>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningFrontend {
    /// Base URL of this load balancer.
    pub fn url(&self) -> String {
        let scheme = if self.state.config.tls.is_some() {
            "https"
        } else {
            "http"
        };
        format!("{scheme}://{}", self.addr)
    }

    pub fn shutdown(self) {
        self.server.abort();
    }
}

/// Binds the listener and starts serving; resolve the actual address via
/// [`RunningFrontend::addr`] (relevant with port 0).
pub async fn spawn(config: FrontendConfig) -> anyhow::Result<RunningFrontend> {
    config.validate()?;
    let tls = config
        .tls
        .as_ref()
        .map(sieve_net::server_config)
        .transpose()
        .context("loading TLS material")?;

    let mut http = reqwest::Client::builder()
        .connect_timeout(Duration::from_millis(config.multicast_timeout_ms))
        .timeout(Duration::from_millis(config.multicast_timeout_ms));
    let mut ws_tls = None;
    if let Some(ca) = &config.upstream_ca {
        let pem = std::fs::read(ca).with_context(|| format!("reading {}", ca.display()))?;
        http = http.add_root_certificate(
            reqwest::Certificate::from_pem(&pem).context("parsing upstream CA")?,
        );
        ws_tls = Some(sieve_net::client_config(ca, None).context("upstream TLS config")?);
    }
    let state = Arc::new(FrontendState {
        partition_map: PartitionMap::from_addresses(config.matchers.clone()),
        http: http.build().context("building upstream client")?,
        ws_tls,
        config,
    });

    let listener = tokio::net::TcpListener::bind(state.config.listen_addr)
        .await
        .with_context(|| format!("binding {}", state.config.listen_addr))?;
    let addr = listener.local_addr()?;

    let app = http::router(Arc::clone(&state));
    let server = tokio::spawn(sieve_net::serve(listener, app, tls));

    tracing::info!(%addr, matchers = state.partition_map.len(), "load balancer up");
    Ok(RunningFrontend {
        addr,
        state,
        server,
    })
}

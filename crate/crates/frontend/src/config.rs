//! Load-balancer configuration, loaded from a JSON file by the binary or
//! built directly by tests and the local cluster launcher.

use serde::{Deserialize, Serialize};
use sieve_net::{AuthMode, TlsPaths};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub listen_addr: SocketAddr,
    /// Matcher base URLs in partition order: position i serves partition i.
    pub matchers: Vec<String>,
    /// Per-matcher budget for fan-out requests (publications, policies,
    /// removals); a matcher that does not answer in time is reported as
    /// `timeout` in the multicast detail.
    #[serde(default = "defaults::multicast_timeout_ms")]
    pub multicast_timeout_ms: u64,
    #[serde(default)]
    pub auth_mode: AuthMode,
    /// Client-facing TLS (the LB terminates TLS; matchers sit on a trusted
    /// internal network).
    #[serde(default)]
    pub tls: Option<TlsPaths>,
    /// CA bundle for `https`/`wss` matcher addresses.
    #[serde(default)]
    pub upstream_ca: Option<PathBuf>,
}

mod defaults {
    pub fn multicast_timeout_ms() -> u64 {
        2000
    }
}

impl FrontendConfig {
    /// Plaintext config on an ephemeral port in front of the given matchers.
    pub fn local<I, S>(matchers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FrontendConfig {
            listen_addr: "127.0.0.1:0".parse().unwrap(),
            matchers: matchers.into_iter().map(Into::into).collect(),
            multicast_timeout_ms: defaults::multicast_timeout_ms(),
            auth_mode: AuthMode::Plain,
            tls: None,
            upstream_ca: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(
            !self.matchers.is_empty(),
            "the matcher list must not be empty"
        );
        anyhow::ensure!(
            self.multicast_timeout_ms >= 1,
            "multicast_timeout_ms must be at least 1"
        );
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

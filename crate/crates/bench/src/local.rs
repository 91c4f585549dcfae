//! In-process cluster: N matchers plus a load balancer inside this process,
//! on loopback ports. Used by sweeps and tests; the `cluster` binary spawns
//! the same topology as separate processes.

use sieve_core::AuthHash;
use sieve_frontend::{FrontendConfig, RunningFrontend};
use sieve_matcher::{MatcherConfig, RunningMatcher};
use std::collections::BTreeMap;
use std::io::Write;

/// Shape of a cluster to start.
#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub matchers: usize,
    pub worker_count: usize,
    pub queue_capacity: usize,
    pub conn_buffer: usize,
    pub permission_filtering: bool,
    /// Subscriber identity → groups, loaded by every matcher at startup.
    pub groups: BTreeMap<AuthHash, Vec<String>>,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        let defaults = MatcherConfig::local(0);
        ClusterSpec {
            matchers: 1,
            worker_count: defaults.worker_count,
            queue_capacity: defaults.queue_capacity,
            conn_buffer: defaults.conn_buffer,
            permission_filtering: defaults.permission_filtering,
            groups: BTreeMap::new(),
        }
    }
}

/// A running in-process cluster. Shut it down explicitly; dropping leaks the
/// matcher worker threads until process exit.
pub struct LocalCluster {
    pub matchers: Vec<RunningMatcher>,
    pub lb: RunningFrontend,
    /// Keeps the generated groups file alive for the cluster's lifetime.
    _groups_file: Option<tempfile::NamedTempFile>,
}

impl LocalCluster {
    pub async fn start(spec: &ClusterSpec) -> anyhow::Result<LocalCluster> {
        anyhow::ensure!(spec.matchers >= 1, "a cluster has at least one matcher");
        let groups_file = if spec.groups.is_empty() {
            None
        } else {
            let mut file = tempfile::NamedTempFile::new()?;
            file.write_all(serde_json::to_string(&spec.groups)?.as_bytes())?;
            file.flush()?;
            Some(file)
        };

        let mut matchers = Vec::with_capacity(spec.matchers);
        for id in 0..spec.matchers {
            let mut config = MatcherConfig::local(id);
            config.worker_count = spec.worker_count;
            config.queue_capacity = spec.queue_capacity;
            config.conn_buffer = spec.conn_buffer;
            config.permission_filtering = spec.permission_filtering;
            config.groups_file = groups_file.as_ref().map(|f| f.path().to_path_buf());
            matchers.push(sieve_matcher::spawn(config).await?);
        }

        let addresses: Vec<String> = matchers.iter().map(|m| m.url()).collect();
        let lb = sieve_frontend::spawn(FrontendConfig::local(addresses)).await?;

        Ok(LocalCluster {
            matchers,
            lb,
            _groups_file: groups_file,
        })
    }

    /// Base URL of the load balancer — the only address clients need.
    pub fn url(&self) -> String {
        self.lb.url()
    }

    pub async fn shutdown(self) {
        self.lb.shutdown();
        for matcher in self.matchers {
            matcher.shutdown().await;
        }
    }
}

//! Client library for the sieve cluster.
//!
//! Talks to the load balancer's HTTP/WebSocket surface and nothing else:
//! subscriptions with a streaming receive handle, publications, and
//! permission policies. One [`Client`] is cheap to clone and safe to share;
//! each [`SubscriptionHandle`] is an independent stream consumed by one
//! task at a time.
//!
//! A handle's WebSocket reattaches by itself after a network drop, with
//! exponential backoff; publications matched while the socket was down are
//! lost, exactly as they would be for any disconnected subscriber. The one
//! close the handle never retries is displacement — the server ending this
//! attachment because a newer one replaced it.

mod identity;
mod subscription;

pub use identity::ClientIdentity;
pub use subscription::SubscriptionHandle;

use sieve_core::constraint::Constraint;
use sieve_core::wire::{header, ErrorBody, LbSubscribeRequest, MulticastEntry};
use sieve_core::wire::{PolicyAck, PolicyRequest, PublishAck, RemoveAck, SubscribeAck};
use sieve_core::{AuthHash, PolicyId, SubId};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

/// Everything that can go wrong talking to the cluster.
#[derive(Debug, Error)]
pub enum ClientError {
    /// The server did not accept the presented identity (HTTP 401).
    #[error("unauthenticated: {0}")]
    Unauthenticated(String),
    /// The request was understood and refused (HTTP 400/404).
    #[error("malformed: {0}")]
    Malformed(String),
    /// The cluster cannot take the request right now (HTTP 502/503).
    #[error("unavailable: {0}")]
    Unavailable(String),
    /// A publication or policy reached only part of the cluster (HTTP 207).
    /// Carries the acknowledged id and the per-matcher detail so the caller
    /// can see exactly which matchers failed.
    #[error("partial delivery: {id} reached only part of the cluster")]
    PartialDelivery {
        id: String,
        multicast: Vec<MulticastEntry>,
    },
    /// The server closed this attachment because a newer connection
    /// attached the same subscription. Terminal: the stream will not
    /// reconnect, the newer attachment owns the subscription now.
    #[error("displaced by a newer attachment of the same subscription")]
    Displaced,
    /// The subscription stream ended and cannot resume (for example the
    /// subscription was removed, or the reconnect budget ran out).
    #[error("subscription stream closed: {0}")]
    StreamClosed(String),
    /// The request never produced an HTTP answer.
    #[error("transport: {0}")]
    Transport(String),
    /// The server answered something this client does not understand.
    #[error("protocol: {0}")]
    Protocol(String),
    /// Local configuration problem (unreadable certificate, bad URL).
    #[error("configuration: {0}")]
    Config(String),
}

/// How a subscription stream re-attaches after its socket drops.
#[derive(Debug, Clone, Copy)]
pub struct ReconnectPolicy {
    /// Delay before the first retry; doubles on every failure.
    pub base: Duration,
    /// Ceiling for the doubling delay.
    pub cap: Duration,
    /// Give up after this many consecutive failures (`None`: keep trying).
    pub max_retries: Option<u32>,
}

impl Default for ReconnectPolicy {
    fn default() -> Self {
        ReconnectPolicy {
            base: Duration::from_millis(100),
            cap: Duration::from_secs(5),
            max_retries: None,
        }
    }
}

pub(crate) struct Inner {
    pub(crate) base: String,
    pub(crate) identity: ClientIdentity,
    pub(crate) http: reqwest::Client,
    pub(crate) ws_tls: Option<Arc<sieve_net::rustls::ClientConfig>>,
    pub(crate) reconnect: ReconnectPolicy,
}

/// Handle to one cluster address. Clones share the connection pool.
#[derive(Clone)]
pub struct Client {
    inner: Arc<Inner>,
}

/// Builds a [`Client`]; TLS deployments add the CA their server certificate
/// chains to.
pub struct ClientBuilder {
    base: String,
    identity: ClientIdentity,
    ca: Option<PathBuf>,
    timeout: Duration,
    reconnect: ReconnectPolicy,
}

impl ClientBuilder {
    pub fn ca_file(mut self, path: impl Into<PathBuf>) -> Self {
        self.ca = Some(path.into());
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn reconnect(mut self, policy: ReconnectPolicy) -> Self {
        self.reconnect = policy;
        self
    }

    pub fn build(self) -> Result<Client, ClientError> {
        let config = |err: String| ClientError::Config(err);
        if !self.base.starts_with("http://") && !self.base.starts_with("https://") {
            return Err(config(format!(
                "base URL must be http(s)://…, got {}",
                self.base
            )));
        }

        let mut http = reqwest::Client::builder().timeout(self.timeout);
        if let Some(ca) = &self.ca {
            let pem = std::fs::read(ca)
                .map_err(|err| config(format!("reading {}: {err}", ca.display())))?;
            http = http.add_root_certificate(
                reqwest::Certificate::from_pem(&pem)
                    .map_err(|err| config(format!("parsing {}: {err}", ca.display())))?,
            );
        }
        let mut client_cert = None;
        if let ClientIdentity::Certificate {
            cert_pem, key_pem, ..
        } = &self.identity
        {
            let pem = [
                std::fs::read(cert_pem)
                    .map_err(|err| config(format!("reading {}: {err}", cert_pem.display())))?,
                std::fs::read(key_pem)
                    .map_err(|err| config(format!("reading {}: {err}", key_pem.display())))?,
            ]
            .concat();
            http = http.identity(
                reqwest::Identity::from_pem(&pem)
                    .map_err(|err| config(format!("client identity: {err}")))?,
            );
            client_cert = Some((cert_pem.clone(), key_pem.clone()));
        }

        // WebSocket TLS mirrors the HTTP client: same roots, same client
        // certificate.
        let ws_tls = match (&self.ca, &client_cert) {
            (Some(ca), cert) => Some(
                sieve_net::client_config(
                    ca,
                    cert.as_ref().map(|(c, k)| (c.as_path(), k.as_path())),
                )
                .map_err(|err| config(format!("websocket TLS: {err}")))?,
            ),
            (None, _) => None,
        };

        Ok(Client {
            inner: Arc::new(Inner {
                base: self.base.trim_end_matches('/').to_owned(),
                identity: self.identity,
                http: http
                    .build()
                    .map_err(|err| config(format!("http client: {err}")))?,
                ws_tls,
                reconnect: self.reconnect,
            }),
        })
    }
}

impl Client {
    /// Starts a builder for the cluster at `base` (the load balancer URL).
    pub fn builder(base: impl Into<String>, identity: ClientIdentity) -> ClientBuilder {
        ClientBuilder {
            base: base.into(),
            identity,
            ca: None,
            timeout: Duration::from_secs(10),
            reconnect: ReconnectPolicy::default(),
        }
    }

    /// Plaintext client with default settings.
    pub fn new(base: impl Into<String>, identity: ClientIdentity) -> Result<Self, ClientError> {
        Client::builder(base, identity).build()
    }

    /// The hash under which this client's subscriptions and policies are
    /// filed.
    pub fn auth_hash(&self) -> &AuthHash {
        self.inner.identity.auth_hash()
    }

    pub(crate) fn request(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        Inner::request(&self.inner, method, path)
    }

    /// Registers the constraints and attaches the delivery stream.
    pub async fn subscribe(
        &self,
        constraints: Vec<Constraint>,
    ) -> Result<SubscriptionHandle, ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/subscriptions")
            .json(&LbSubscribeRequest { constraints })
            .send()
            .await
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(refusal(resp).await);
        }
        let ack: SubscribeAck = resp.json().await.map_err(protocol)?;
        SubscriptionHandle::attach(Arc::clone(&self.inner), ack.sub_id, ack.matcher_id).await
    }

    /// Re-attaches the stream of a subscription registered earlier (same
    /// identity), e.g. after a process restart.
    pub async fn attach(
        &self,
        sub_id: SubId,
        matcher_id: usize,
    ) -> Result<SubscriptionHandle, ClientError> {
        SubscriptionHandle::attach(Arc::clone(&self.inner), sub_id, matcher_id).await
    }

    /// Removes a subscription by id. `Ok(true)` when this identity owned it.
    pub async fn unsubscribe(&self, sub_id: &SubId) -> Result<bool, ClientError> {
        let resp = self
            .request(
                reqwest::Method::DELETE,
                &format!("/subscriptions/{sub_id}"),
            )
            .send()
            .await
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(refusal(resp).await);
        }
        let ack: RemoveAck = resp.json().await.map_err(protocol)?;
        Ok(ack.removed)
    }

    /// Publishes a JSON document to every matcher.
    pub async fn publish(&self, document: &serde_json::Value) -> Result<PublishAck, ClientError> {
        self.publish_raw(serde_json::to_vec(document).expect("serializable value"))
            .await
    }

    /// Publishes pre-serialized JSON. The bytes travel to subscribers
    /// verbatim, so this is the path for byte-exact delivery.
    pub async fn publish_raw(&self, body: Vec<u8>) -> Result<PublishAck, ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/publications")
            .header(header::SEND_TS_MS, now_ms().to_string())
            .body(body)
            .send()
            .await
            .map_err(transport)?;
        match resp.status().as_u16() {
            202 => resp.json().await.map_err(protocol),
            // Part of the cluster took it; the caller decides whether
            // partial reach is acceptable.
            207 => {
                let ack: PublishAck = resp.json().await.map_err(protocol)?;
                Err(ClientError::PartialDelivery {
                    id: ack.pub_id.to_string(),
                    multicast: ack.multicast.unwrap_or_default(),
                })
            }
            _ => Err(refusal(resp).await),
        }
    }

    /// Installs a permission policy: publications matching
    /// `pub_constraints` are delivered only to subscribers in `group`
    /// (`"*"` admits everyone).
    pub async fn install_policy(
        &self,
        pub_constraints: Vec<Constraint>,
        group: impl Into<String>,
    ) -> Result<PolicyAck, ClientError> {
        let resp = self
            .request(reqwest::Method::POST, "/policies")
            .json(&PolicyRequest {
                policy_id: None,
                pub_constraints,
                group: group.into(),
            })
            .send()
            .await
            .map_err(transport)?;
        match resp.status().as_u16() {
            200 => resp.json().await.map_err(protocol),
            207 => {
                let ack: PolicyAck = resp.json().await.map_err(protocol)?;
                Err(ClientError::PartialDelivery {
                    id: ack.policy_id.to_string(),
                    multicast: ack.multicast.unwrap_or_default(),
                })
            }
            _ => Err(refusal(resp).await),
        }
    }

    /// Removes a policy installed by this identity. `Ok(true)` when at
    /// least one matcher held it.
    pub async fn remove_policy(&self, policy_id: &PolicyId) -> Result<bool, ClientError> {
        let resp = self
            .request(reqwest::Method::DELETE, &format!("/policies/{policy_id}"))
            .send()
            .await
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(refusal(resp).await);
        }
        let ack: RemoveAck = resp.json().await.map_err(protocol)?;
        Ok(ack.removed)
    }
}

impl Inner {
    pub(crate) fn request(
        inner: &Arc<Inner>,
        method: reqwest::Method,
        path: &str,
    ) -> reqwest::RequestBuilder {
        // The header is the identity on plaintext deployments; under mutual
        // TLS the server ignores it in favor of the certificate, so sending
        // it unconditionally is harmless.
        inner
            .http
            .request(method, format!("{}{path}", inner.base))
            .header(header::AUTH_HASH, inner.identity.auth_hash().as_str())
    }
}

/// Milliseconds since the Unix epoch, the `X-Send-Ts-Ms` clock.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_millis() as u64
}

fn transport(err: reqwest::Error) -> ClientError {
    if err.is_timeout() {
        ClientError::Unavailable(format!("timed out: {err}"))
    } else {
        ClientError::Transport(err.to_string())
    }
}

fn protocol(err: reqwest::Error) -> ClientError {
    ClientError::Protocol(err.to_string())
}

/// Types a non-2xx HTTP answer.
pub(crate) async fn refusal(resp: reqwest::Response) -> ClientError {
    let status = resp.status().as_u16();
    let detail = match resp.json::<ErrorBody>().await {
        Ok(body) => body.error,
        Err(_) => format!("HTTP {status}"),
    };
    match status {
        401 => ClientError::Unauthenticated(detail),
        400 | 404 => ClientError::Malformed(detail),
        502 | 503 => ClientError::Unavailable(detail),
        _ => ClientError::Protocol(format!("HTTP {status}: {detail}")),
    }
}

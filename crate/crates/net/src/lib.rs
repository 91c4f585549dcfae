//! Shared HTTP/WebSocket serving loop for the cluster services.
//!
//! Both services speak plain HTTP in test deployments and TLS in hardened
//! ones. In mutual-TLS mode the client certificate is required at the
//! handshake and its identity hash is attached to every request of the
//! connection as a [`PeerIdentity`] extension; in plaintext mode requests
//! carry the identity in the `X-Auth-Hash` header instead. A process runs in
//! exactly one mode — [`authenticate`] consults only the source that mode
//! allows.

use anyhow::Context;
use axum::http::HeaderMap;
use axum::Extension;
use hyper_util::rt::{TokioExecutor, TokioIo};
use hyper_util::service::TowerToHyperService;
use serde::{Deserialize, Serialize};
use sieve_core::wire::header;
use sieve_core::AuthHash;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio_rustls::TlsAcceptor;

#[cfg(feature = "testcerts")]
pub mod testcerts;

/// Re-exported so dependants name the exact rustls version this crate's
/// configs are built with.
pub use rustls;

/// How a service authenticates its clients. Fixed per process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthMode {
    /// Plaintext test mode: identity from the `X-Auth-Hash` header.
    #[default]
    Plain,
    /// Mutual TLS: identity derived from the client certificate.
    Mtls,
}

/// Certificate material of a TLS-serving process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TlsPaths {
    /// Server certificate chain, PEM.
    pub cert: PathBuf,
    /// Server private key, PEM.
    pub key: PathBuf,
    /// CA bundle that client certificates must chain to; required in
    /// mutual-TLS mode.
    #[serde(default)]
    pub client_ca: Option<PathBuf>,
}

/// Identity of the TLS peer, attached per connection in mutual-TLS mode.
#[derive(Debug, Clone)]
pub struct PeerIdentity(pub Option<AuthHash>);

/// Authentication failures, mapped to 401 by the services.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("missing {0} header", header::AUTH_HASH)]
    MissingHeader,
    #[error("malformed {0} header", header::AUTH_HASH)]
    BadHeader,
    #[error("no client certificate presented")]
    NoClientCert,
}

/// Resolves the client identity of a request under the given mode.
pub fn authenticate(
    mode: AuthMode,
    peer: Option<&PeerIdentity>,
    headers: &HeaderMap,
) -> Result<AuthHash, AuthError> {
    match mode {
        AuthMode::Mtls => peer
            .and_then(|p| p.0.clone())
            .ok_or(AuthError::NoClientCert),
        AuthMode::Plain => {
            let raw = headers
                .get(header::AUTH_HASH)
                .ok_or(AuthError::MissingHeader)?
                .to_str()
                .map_err(|_| AuthError::BadHeader)?;
            AuthHash::parse(raw).map_err(|_| AuthError::BadHeader)
        }
    }
}

fn ring_provider() -> Arc<rustls::crypto::CryptoProvider> {
    Arc::new(rustls::crypto::ring::default_provider())
}

fn load_certs(path: &Path) -> anyhow::Result<Vec<rustls::pki_types::CertificateDer<'static>>> {
    let pem = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let certs: Result<Vec<_>, _> = rustls_pemfile::certs(&mut pem.as_slice()).collect();
    let certs = certs.with_context(|| format!("parsing certificates in {}", path.display()))?;
    anyhow::ensure!(!certs.is_empty(), "no certificates in {}", path.display());
    Ok(certs)
}

fn load_key(path: &Path) -> anyhow::Result<rustls::pki_types::PrivateKeyDer<'static>> {
    let pem = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    rustls_pemfile::private_key(&mut pem.as_slice())
        .with_context(|| format!("parsing key in {}", path.display()))?
        .ok_or_else(|| anyhow::anyhow!("no private key in {}", path.display()))
}

fn root_store(path: &Path) -> anyhow::Result<rustls::RootCertStore> {
    let mut roots = rustls::RootCertStore::empty();
    for cert in load_certs(path)? {
        roots.add(cert)?;
    }
    Ok(roots)
}

/// Builds the rustls server configuration for [`serve`]. With a `client_ca`
/// the handshake requires a client certificate chaining to it (mutual TLS).
pub fn server_config(paths: &TlsPaths) -> anyhow::Result<Arc<rustls::ServerConfig>> {
    let builder = rustls::ServerConfig::builder_with_provider(ring_provider())
        .with_safe_default_protocol_versions()?;
    let builder = match &paths.client_ca {
        Some(ca) => {
            let verifier =
                rustls::server::WebPkiClientVerifier::builder_with_provider(
                    Arc::new(root_store(ca)?),
                    ring_provider(),
                )
                .build()?;
            builder.with_client_cert_verifier(verifier)
        }
        None => builder.with_no_client_auth(),
    };
    let mut config = builder.with_single_cert(load_certs(&paths.cert)?, load_key(&paths.key)?)?;
    config.alpn_protocols = vec![b"http/1.1".to_vec()];
    Ok(Arc::new(config))
}

/// Builds a rustls client configuration trusting `ca` and, when given,
/// presenting the identity certificate (mutual TLS).
pub fn client_config(
    ca: &Path,
    identity: Option<(&Path, &Path)>,
) -> anyhow::Result<Arc<rustls::ClientConfig>> {
    let builder = rustls::ClientConfig::builder_with_provider(ring_provider())
        .with_safe_default_protocol_versions()?
        .with_root_certificates(root_store(ca)?);
    let config = match identity {
        Some((cert, key)) => builder.with_client_auth_cert(load_certs(cert)?, load_key(key)?)?,
        None => builder.with_no_client_auth(),
    };
    Ok(Arc::new(config))
}

/// Serves `app` on `listener` until the task is dropped.
///
/// Plain mode hands off to axum. TLS mode runs its own accept loop so the
/// peer certificate can be read after each handshake: the connection's
/// requests then carry a [`PeerIdentity`] extension with the derived hash.
pub async fn serve(
    listener: TcpListener,
    app: axum::Router,
    tls: Option<Arc<rustls::ServerConfig>>,
) -> std::io::Result<()> {
    let Some(tls) = tls else {
        return axum::serve(listener, app).await;
    };

    let acceptor = TlsAcceptor::from(tls);
    loop {
        let (tcp, peer_addr) = listener.accept().await?;
        let acceptor = acceptor.clone();
        let app = app.clone();
        tokio::spawn(async move {
            let stream = match acceptor.accept(tcp).await {
                Ok(s) => s,
                Err(err) => {
                    tracing::debug!(%peer_addr, "TLS handshake failed: {err}");
                    return;
                }
            };
            let identity = stream
                .get_ref()
                .1
                .peer_certificates()
                .and_then(|certs| certs.first())
                .map(|der| AuthHash::from_cert_der(der.as_ref()));
            let app = app.layer(Extension(PeerIdentity(identity)));
            let service = TowerToHyperService::new(app);
            let result = hyper_util::server::conn::auto::Builder::new(TokioExecutor::new())
                .serve_connection_with_upgrades(TokioIo::new(stream), service)
                .await;
            if let Err(err) = result {
                tracing::debug!(%peer_addr, "connection ended with error: {err}");
            }
        });
    }
}

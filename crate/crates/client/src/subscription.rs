//! The receiving side of a subscription: one WebSocket, pumped into an
//! in-order stream, re-attached with backoff when the network drops it.

use crate::{ClientError, Inner};
use futures_util::StreamExt;
use sieve_core::wire::{header, DeliveryEnvelope, ErrorBody, RemoveAck, CLOSE_DISPLACED};
use sieve_core::SubId;
use std::sync::Arc;
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::protocol::Message;
use tokio_tungstenite::{Connector, MaybeTlsStream, WebSocketStream};

type WsStream = WebSocketStream<MaybeTlsStream<TcpStream>>;

/// A registered subscription with its live delivery stream.
///
/// Frames arrive in the order the matcher sent them; the handle never
/// reorders. Consume from one task at a time; other handles are fully
/// independent. Dropping the handle tears down the socket but leaves the
/// subscription registered — use [`close`](Self::close) to remove it.
pub struct SubscriptionHandle {
    sub_id: SubId,
    matcher_id: usize,
    rx: mpsc::UnboundedReceiver<Result<DeliveryEnvelope, ClientError>>,
    pump: tokio::task::JoinHandle<()>,
    inner: Arc<Inner>,
}

impl std::fmt::Debug for SubscriptionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubscriptionHandle")
            .field("sub_id", &self.sub_id)
            .field("matcher_id", &self.matcher_id)
            .finish_non_exhaustive()
    }
}

impl SubscriptionHandle {
    pub fn sub_id(&self) -> &SubId {
        &self.sub_id
    }

    /// Partition index of the matcher holding this subscription.
    pub fn matcher_id(&self) -> usize {
        self.matcher_id
    }

    pub(crate) async fn attach(
        inner: Arc<Inner>,
        sub_id: SubId,
        matcher_id: usize,
    ) -> Result<Self, ClientError> {
        // The first attach does not retry: a refusal here is an answer
        // (wrong identity, unknown subscription), not a network hiccup.
        let socket = dial(&inner, &sub_id, matcher_id).await?;
        let (tx, rx) = mpsc::unbounded_channel();
        let pump = tokio::spawn(pump(
            Arc::clone(&inner),
            sub_id.clone(),
            matcher_id,
            socket,
            tx,
        ));
        Ok(SubscriptionHandle {
            sub_id,
            matcher_id,
            rx,
            pump,
            inner,
        })
    }

    /// Waits for the next delivery.
    ///
    /// [`ClientError::Displaced`] and [`ClientError::StreamClosed`] are
    /// terminal; every later call answers the same way.
    pub async fn recv(&mut self) -> Result<DeliveryEnvelope, ClientError> {
        match self.rx.recv().await {
            Some(item) => item,
            None => Err(ClientError::StreamClosed("stream ended".into())),
        }
    }

    /// Detaches and unsubscribes. `Ok(true)` when the server removed the
    /// registration (it answers `false` for an already-removed id).
    pub async fn close(self) -> Result<bool, ClientError> {
        self.pump.abort();
        let resp = Inner::request(
            &self.inner,
            reqwest::Method::DELETE,
            &format!("/subscriptions/{}", self.sub_id),
        )
        .send()
        .await
        .map_err(|err| ClientError::Transport(err.to_string()))?;
        if !resp.status().is_success() {
            return Err(crate::refusal(resp).await);
        }
        let ack: RemoveAck = resp
            .json()
            .await
            .map_err(|err| ClientError::Protocol(err.to_string()))?;
        Ok(ack.removed)
    }
}

impl Drop for SubscriptionHandle {
    fn drop(&mut self) {
        self.pump.abort();
    }
}

/// Opens the WebSocket for `sub_id`, mapping an HTTP refusal of the upgrade
/// to the same typed errors the REST calls produce.
async fn dial(inner: &Arc<Inner>, sub_id: &SubId, matcher_id: usize) -> Result<WsStream, ClientError> {
    let ws_base = inner
        .base
        .replacen("https://", "wss://", 1)
        .replacen("http://", "ws://", 1);
    let url = format!("{ws_base}/ws?sub={sub_id}&matcher={matcher_id}");
    let mut request = url
        .into_client_request()
        .map_err(|err| ClientError::Config(format!("attach URL: {err}")))?;
    request.headers_mut().insert(
        header::AUTH_HASH,
        inner
            .identity
            .auth_hash()
            .as_str()
            .parse()
            .expect("hex is a valid header value"),
    );

    let connector = inner.ws_tls.clone().map(Connector::Rustls);
    match tokio_tungstenite::connect_async_tls_with_config(request, None, false, connector).await {
        Ok((socket, _)) => Ok(socket),
        Err(tokio_tungstenite::tungstenite::Error::Http(resp)) => {
            let status = resp.status().as_u16();
            let detail = resp
                .body()
                .as_deref()
                .and_then(|body| serde_json::from_slice::<ErrorBody>(body).ok())
                .map(|body| body.error)
                .unwrap_or_else(|| format!("HTTP {status}"));
            Err(match status {
                401 => ClientError::Unauthenticated(detail),
                400 | 404 => ClientError::Malformed(detail),
                502 | 503 => ClientError::Unavailable(detail),
                _ => ClientError::Protocol(format!("HTTP {status}: {detail}")),
            })
        }
        Err(err) => Err(ClientError::Transport(err.to_string())),
    }
}

/// Reads frames into the channel until the subscription ends.
async fn pump(
    inner: Arc<Inner>,
    sub_id: SubId,
    matcher_id: usize,
    mut socket: WsStream,
    tx: mpsc::UnboundedSender<Result<DeliveryEnvelope, ClientError>>,
) {
    loop {
        match socket.next().await {
            Some(Ok(Message::Text(text))) => {
                let item = serde_json::from_str::<DeliveryEnvelope>(text.as_str())
                    .map_err(|err| ClientError::Protocol(format!("bad envelope: {err}")));
                let terminal = item.is_err();
                if tx.send(item).is_err() || terminal {
                    return;
                }
            }
            Some(Ok(Message::Close(Some(frame))))
                if u16::from(frame.code) == CLOSE_DISPLACED =>
            {
                let _ = tx.send(Err(ClientError::Displaced));
                return;
            }
            // Any other end of the socket — server close, error, EOF — is
            // a network event; the subscription may well still exist.
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => {
                match redial(&inner, &sub_id, matcher_id, &tx).await {
                    Some(next) => socket = next,
                    None => return,
                }
            }
            Some(Ok(_)) => {} // ping/pong/binary: nothing to deliver
        }
    }
}

/// Re-attach loop: exponential backoff, stopping on a server refusal (the
/// subscription is gone or no longer ours) or when the consumer went away.
async fn redial(
    inner: &Arc<Inner>,
    sub_id: &SubId,
    matcher_id: usize,
    tx: &mpsc::UnboundedSender<Result<DeliveryEnvelope, ClientError>>,
) -> Option<WsStream> {
    let policy = inner.reconnect;
    let mut delay = policy.base;
    let mut attempts = 0u32;
    loop {
        if tx.is_closed() {
            return None;
        }
        if let Some(max) = policy.max_retries {
            if attempts >= max {
                let _ = tx.send(Err(ClientError::StreamClosed(format!(
                    "gave up re-attaching after {attempts} attempts"
                ))));
                return None;
            }
        }
        tokio::time::sleep(delay).await;
        attempts += 1;
        match dial(inner, sub_id, matcher_id).await {
            Ok(socket) => {
                tracing::debug!(%sub_id, attempts, "re-attached");
                return Some(socket);
            }
            Err(err @ (ClientError::Unauthenticated(_) | ClientError::Malformed(_))) => {
                let _ = tx.send(Err(ClientError::StreamClosed(format!(
                    "server refused re-attachment: {err}"
                ))));
                return None;
            }
            Err(err) => {
                tracing::debug!(%sub_id, attempts, %err, "re-attach failed");
                delay = (delay * 2).min(policy.cap);
            }
        }
    }
}

//! HTTP surface of a matcher node.
//!
//! Data-plane endpoints (`/subscriptions`, `/publications`, `/policies`,
//! `/ws`) authenticate the caller; operational endpoints (`/stats`,
//! `/config`) do not. Every non-2xx answer carries an [`ErrorBody`].

use crate::registry::{CloseReason, ConnBuffer, ConnKey};
use crate::state::{Job, MatcherState};
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use bytes::Bytes;
use futures_util::{Sink, SinkExt, StreamExt};
use serde::Deserialize;
use sieve_core::constraint::validate_all;
use sieve_core::wire::{
    header, ConfigDoc, ConfigUpdate, ErrorBody, MatcherSubscribeRequest, PolicyAck, PolicyRequest,
    PublishAck, RemoveAck, SubscribeAck, CLOSE_DISPLACED,
};
use sieve_core::{AuthHash, PolicyId, PubId, SubId, Subscription, SubscriptionPolicy};
use sieve_net::PeerIdentity;
use sieve_store::{Ownership, RegisterOutcome, StoreError};
use std::sync::atomic::Ordering;
use std::sync::Arc;

pub fn router(state: Arc<MatcherState>) -> Router {
    Router::new()
        .route("/subscriptions", post(subscribe))
        .route("/subscriptions/{sub_id}", axum::routing::delete(unsubscribe))
        .route("/publications", post(publish))
        .route("/policies", post(install_policy))
        .route("/policies/{policy_id}", axum::routing::delete(remove_policy))
        .route("/ws", get(ws_attach))
        .route("/stats", get(stats))
        .route("/config", post(update_config))
        .with_state(state)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody::new(msg))).into_response()
}

fn identify(
    state: &MatcherState,
    peer: Option<&Extension<PeerIdentity>>,
    headers: &HeaderMap,
) -> Result<AuthHash, Response> {
    sieve_net::authenticate(state.config.auth_mode, peer.map(|ext| &ext.0), headers)
        .map_err(|err| error(StatusCode::UNAUTHORIZED, err.to_string()))
}

async fn subscribe(
    State(state): State<Arc<MatcherState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let auth_hash = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let req: MatcherSubscribeRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(err) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {err}")),
    };
    if let Err(err) = validate_all(&req.constraints) {
        return error(StatusCode::BAD_REQUEST, err.to_string());
    }
    let ack = SubscribeAck {
        sub_id: req.sub_id.clone(),
        matcher_id: state.config.matcher_id,
    };
    match state.store.register(Subscription {
        auth_hash,
        sub_id: req.sub_id,
        constraints: req.constraints,
    }) {
        // Registering and re-registering (replace) acknowledge identically.
        Ok(RegisterOutcome::Created | RegisterOutcome::Replaced) => {
            (StatusCode::OK, Json(ack)).into_response()
        }
        Err(StoreError::CapacityExceeded(limit)) => error(
            StatusCode::SERVICE_UNAVAILABLE,
            format!("subscription capacity {limit} reached"),
        ),
    }
}

async fn unsubscribe(
    State(state): State<Arc<MatcherState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    Path(sub_id): Path<String>,
) -> Response {
    let auth_hash = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let sub_id = match SubId::parse(&sub_id) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    // Idempotent: answers `removed: false` for unknown ids and for ids owned
    // by someone else (the removal is scoped to the caller's identity).
    let removed = state.store.remove(&auth_hash, &sub_id);
    if removed {
        // A live connection for a removed subscription is shut down; its
        // undrained envelopes are accounted by the writer on close.
        let key: ConnKey = (auth_hash, sub_id);
        if let Some(buffer) = state.registry.buffer_of(&key) {
            buffer.request_close(CloseReason::Gone);
        }
    }
    Json(RemoveAck { removed }).into_response()
}

/// Publishing needs no identity: permission policies restrict which
/// *subscribers* may see a publication, never who may publish (in mutual-TLS
/// deployments the handshake itself still demands a certificate).
async fn publish(
    State(state): State<Arc<MatcherState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let pub_id = match headers.get(header::PUB_ID) {
        Some(value) => {
            let parsed = value.to_str().ok().and_then(|s| PubId::parse(s).ok());
            match parsed {
                Some(id) => id,
                None => {
                    state.counters.rejected.fetch_add(1, Ordering::Relaxed);
                    return error(
                        StatusCode::BAD_REQUEST,
                        format!("malformed {} header", header::PUB_ID),
                    );
                }
            }
        }
        None => PubId::random(),
    };
    let send_ts_ms = match headers.get(header::SEND_TS_MS) {
        Some(value) => match value.to_str().ok().and_then(|s| s.parse::<u64>().ok()) {
            Some(ts) => Some(ts),
            None => {
                state.counters.rejected.fetch_add(1, Ordering::Relaxed);
                return error(
                    StatusCode::BAD_REQUEST,
                    format!("malformed {} header", header::SEND_TS_MS),
                );
            }
        },
        None => None,
    };
    let doc: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(doc) => doc,
        Err(err) => {
            state.counters.rejected.fetch_add(1, Ordering::Relaxed);
            return error(StatusCode::BAD_REQUEST, format!("invalid JSON: {err}"));
        }
    };
    if !doc.is_object() {
        state.counters.rejected.fetch_add(1, Ordering::Relaxed);
        return error(
            StatusCode::BAD_REQUEST,
            "publication must be a JSON object",
        );
    }

    let accepted = state.enqueue(Job {
        pub_id: pub_id.clone(),
        body,
        doc,
        send_ts_ms,
    });
    if !accepted {
        return error(StatusCode::SERVICE_UNAVAILABLE, "work queue full");
    }
    (
        StatusCode::ACCEPTED,
        Json(PublishAck {
            pub_id,
            multicast: None,
        }),
    )
        .into_response()
}

async fn install_policy(
    State(state): State<Arc<MatcherState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let owner = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let req: PolicyRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(err) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {err}")),
    };
    // The load balancer mints missing ids before fanning out; a direct
    // caller must supply one so retries stay idempotent.
    let Some(policy_id) = req.policy_id else {
        return error(StatusCode::BAD_REQUEST, "policy_id is required");
    };
    if req.group.is_empty() {
        return error(StatusCode::BAD_REQUEST, "group must not be empty");
    }
    if let Err(err) = validate_all(&req.pub_constraints) {
        return error(StatusCode::BAD_REQUEST, err.to_string());
    }
    if state
        .store
        .policies()
        .iter()
        .any(|p| p.policy_id == policy_id && p.owner != owner)
    {
        return error(
            StatusCode::UNAUTHORIZED,
            "policy id is owned by another identity",
        );
    }
    state.store.install_policy(SubscriptionPolicy {
        policy_id: policy_id.clone(),
        owner,
        pub_constraints: req.pub_constraints,
        group: req.group,
    });
    Json(PolicyAck {
        policy_id,
        multicast: None,
    })
    .into_response()
}

async fn remove_policy(
    State(state): State<Arc<MatcherState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    Path(policy_id): Path<String>,
) -> Response {
    let owner = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let policy_id = match PolicyId::parse(&policy_id) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    let removed = state.store.remove_policy(&owner, &policy_id);
    Json(RemoveAck { removed }).into_response()
}

#[derive(Deserialize)]
struct WsQuery {
    sub: String,
}

async fn ws_attach(
    State(state): State<Arc<MatcherState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    Query(query): Query<WsQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    let auth_hash = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let sub_id = match SubId::parse(&query.sub) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    match state.store.ownership(&auth_hash, &sub_id) {
        Ownership::Owned => {}
        Ownership::OwnedByOther => {
            return error(
                StatusCode::UNAUTHORIZED,
                "subscription belongs to another identity",
            )
        }
        Ownership::Unknown => return error(StatusCode::NOT_FOUND, "unknown subscription"),
    }
    let key: ConnKey = (auth_hash, sub_id);
    upgrade.on_upgrade(move |socket| subscriber_connection(state, key, socket))
}

/// Runs one subscriber connection: a reader task watching for the peer going
/// away, and the writer loop draining the delivery buffer to the socket.
async fn subscriber_connection(state: Arc<MatcherState>, key: ConnKey, socket: WebSocket) {
    let (buffer, displaced) = state.registry.attach(key.clone());
    if let Some(old) = displaced {
        old.request_close(CloseReason::Displace(CLOSE_DISPLACED));
    }

    let (mut sink, mut stream) = socket.split();
    let reader_buffer = Arc::clone(&buffer);
    let reader = tokio::spawn(async move {
        // Subscribers send no application data; the stream ending (close
        // frame, error, or EOF) is the only signal of interest.
        loop {
            match stream.next().await {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            }
        }
        reader_buffer.request_close(CloseReason::Gone);
    });

    let close = writer_loop(&state, &buffer, &mut sink).await;
    if let CloseReason::Displace(code) = close {
        let _ = sink
            .send(Message::Close(Some(CloseFrame {
                code,
                reason: "displaced by a newer connection".into(),
            })))
            .await;
    }
    state.registry.detach(&key, &buffer);
    reader.abort();
}

async fn writer_loop(
    state: &MatcherState,
    buffer: &ConnBuffer,
    sink: &mut (impl Sink<Message, Error = axum::Error> + Unpin),
) -> CloseReason {
    loop {
        let (frames, close) = buffer.drain();
        let mut socket_dead = false;
        for frame in frames {
            if socket_dead || sink.send(Message::Text(frame.into())).await.is_err() {
                // Envelopes matched for this subscriber but never written:
                // the connection is gone as far as delivery is concerned.
                socket_dead = true;
                state
                    .counters
                    .dropped_no_connection
                    .fetch_add(1, Ordering::Relaxed);
            } else {
                state.counters.delivered.fetch_add(1, Ordering::Relaxed);
            }
        }
        if socket_dead {
            buffer.request_close(CloseReason::Gone);
            return CloseReason::Gone;
        }
        if let Some(reason) = close {
            return reason;
        }
        buffer.wait().await;
    }
}

async fn stats(State(state): State<Arc<MatcherState>>) -> Response {
    Json(state.stats()).into_response()
}

async fn update_config(
    State(state): State<Arc<MatcherState>>,
    body: Result<Json<ConfigUpdate>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(update) = match body {
        Ok(body) => body,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    if let Some(enabled) = update.permission_filtering {
        state
            .permission_filtering
            .store(enabled, Ordering::Relaxed);
    }
    Json(ConfigDoc {
        permission_filtering: state.permission_filtering.load(Ordering::Relaxed),
    })
    .into_response()
}

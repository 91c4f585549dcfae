//! Client-facing HTTP surface of the load balancer.
//!
//! Subscriptions go to one matcher (partition hash of the constraints);
//! everything else fans out to all of them. Upstream requests carry the
//! caller's identity in the `X-Auth-Hash` header over the trusted
//! inter-stage channel.

use crate::proxy;
use crate::FrontendState;
use axum::extract::ws::WebSocketUpgrade;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use bytes::Bytes;
use serde::Deserialize;
use sieve_core::constraint::validate_all;
use sieve_core::partition::partition_of;
use sieve_core::wire::{
    header, ConfigDoc, ConfigUpdate, ErrorBody, LbSubscribeRequest, MatcherSubscribeRequest,
    MulticastEntry, MulticastStatus, PolicyAck, PolicyRequest, PublishAck, RemoveAck, SubscribeAck,
};
use sieve_core::{AuthHash, PolicyId, PubId, SubId};
use sieve_net::PeerIdentity;
use std::sync::Arc;
use std::time::Instant;

pub fn router(state: Arc<FrontendState>) -> Router {
    Router::new()
        .route("/subscriptions", post(subscribe))
        .route("/subscriptions/{sub_id}", axum::routing::delete(unsubscribe))
        .route("/publications", post(publish))
        .route("/policies", post(install_policy))
        .route("/policies/{policy_id}", axum::routing::delete(remove_policy))
        .route("/ws", get(ws_attach))
        .route("/cluster", get(cluster))
        .route("/config", post(update_config))
        .with_state(state)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody::new(msg))).into_response()
}

fn identify(
    state: &FrontendState,
    peer: Option<&Extension<PeerIdentity>>,
    headers: &HeaderMap,
) -> Result<AuthHash, Response> {
    sieve_net::authenticate(state.config.auth_mode, peer.map(|ext| &ext.0), headers)
        .map_err(|err| error(StatusCode::UNAUTHORIZED, err.to_string()))
}

/// Relays an upstream answer (status and body) to the client unchanged.
async fn relay(upstream: reqwest::Response) -> Response {
    let status = StatusCode::from_u16(upstream.status().as_u16())
        .unwrap_or(StatusCode::BAD_GATEWAY);
    let body = upstream.bytes().await.unwrap_or_default();
    (status, [("content-type", "application/json")], body).into_response()
}

/// One fan-out call per matcher, concurrently, each on the configured
/// timeout. Returns `(matcher_id, latency_ms, result)` in partition order.
async fn fan_out(
    state: &FrontendState,
    build: impl Fn(&str) -> reqwest::RequestBuilder,
) -> Vec<(usize, f64, Result<reqwest::Response, reqwest::Error>)> {
    let calls = state.partition_map.matchers.iter().map(|m| {
        let request = build(&m.address);
        let id = m.id;
        async move {
            let start = Instant::now();
            let result = request.send().await;
            (id, start.elapsed().as_secs_f64() * 1e3, result)
        }
    });
    futures_util::future::join_all(calls).await
}

fn classify(result: &Result<reqwest::Response, reqwest::Error>) -> MulticastStatus {
    match result {
        Ok(resp) if resp.status().is_success() => MulticastStatus::Ok,
        Ok(resp) if resp.status() == reqwest::StatusCode::SERVICE_UNAVAILABLE => {
            MulticastStatus::QueueFull
        }
        Ok(_) => MulticastStatus::Refused,
        Err(err) if err.is_timeout() => MulticastStatus::Timeout,
        Err(_) => MulticastStatus::Refused,
    }
}

async fn subscribe(
    State(state): State<Arc<FrontendState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let auth = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let req: LbSubscribeRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(err) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {err}")),
    };
    if let Err(err) = validate_all(&req.constraints) {
        return error(StatusCode::BAD_REQUEST, err.to_string());
    }

    let sub_id = SubId::random();
    let partition = partition_of(&req.constraints, state.partition_map.len());
    let endpoint = &state.partition_map.matchers[partition];
    let upstream = state
        .http
        .post(format!("{}/subscriptions", endpoint.address))
        .header(header::AUTH_HASH, auth.as_str())
        .json(&MatcherSubscribeRequest {
            sub_id: sub_id.clone(),
            constraints: req.constraints,
        })
        .send()
        .await;

    match upstream {
        Ok(resp) if resp.status().is_success() => Json(SubscribeAck {
            sub_id,
            matcher_id: partition,
        })
        .into_response(),
        Ok(resp) => relay(resp).await,
        Err(err) => error(
            StatusCode::BAD_GATEWAY,
            format!("matcher {partition} unreachable: {err}"),
        ),
    }
}

async fn unsubscribe(
    State(state): State<Arc<FrontendState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    Path(sub_id): Path<String>,
) -> Response {
    let auth = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let sub_id = match SubId::parse(&sub_id) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };

    // The LB does not track where a subscription lives; ask everyone. At
    // most one matcher answers `removed: true`.
    let outcomes = fan_out(&state, |address| {
        state
            .http
            .delete(format!("{address}/subscriptions/{sub_id}"))
            .header(header::AUTH_HASH, auth.as_str())
    })
    .await;

    let mut removed = false;
    let mut unreachable = Vec::new();
    for (id, _, result) in outcomes {
        match result {
            Ok(resp) if resp.status().is_success() => {
                if let Ok(ack) = resp.json::<RemoveAck>().await {
                    removed |= ack.removed;
                }
            }
            _ => unreachable.push(id),
        }
    }
    if removed {
        return Json(RemoveAck { removed: true }).into_response();
    }
    if !unreachable.is_empty() {
        // The subscription might live on a matcher that did not answer.
        return error(
            StatusCode::BAD_GATEWAY,
            format!("matchers unreachable: {unreachable:?}"),
        );
    }
    Json(RemoveAck { removed: false }).into_response()
}

async fn publish(
    State(state): State<Arc<FrontendState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let send_ts_ms = match headers.get(header::SEND_TS_MS) {
        Some(value) => match value.to_str().ok().and_then(|s| s.parse::<u64>().ok()) {
            Some(ts) => Some(ts),
            None => {
                return error(
                    StatusCode::BAD_REQUEST,
                    format!("malformed {} header", header::SEND_TS_MS),
                )
            }
        },
        None => None,
    };
    // Reject malformed publications here instead of collecting N matcher
    // refusals.
    match serde_json::from_slice::<serde_json::Value>(&body) {
        Ok(doc) if doc.is_object() => {}
        Ok(_) => {
            return error(
                StatusCode::BAD_REQUEST,
                "publication must be a JSON object",
            )
        }
        Err(err) => return error(StatusCode::BAD_REQUEST, format!("invalid JSON: {err}")),
    }

    // The id is minted here, once, so every matcher logs and delivers the
    // same pub_id (a client-supplied header is not honored — the ack is the
    // authoritative id).
    let pub_id = PubId::random();
    let outcomes = fan_out(&state, |address| {
        let mut request = state
            .http
            .post(format!("{address}/publications"))
            .header(header::PUB_ID, pub_id.as_str())
            .body(body.clone());
        if let Some(ts) = send_ts_ms {
            request = request.header(header::SEND_TS_MS, ts.to_string());
        }
        request
    })
    .await;

    let multicast: Vec<MulticastEntry> = outcomes
        .iter()
        .map(|(id, latency_ms, result)| MulticastEntry {
            matcher_id: *id,
            status: classify(result),
            latency_ms: *latency_ms,
        })
        .collect();
    let acked = multicast.iter().filter(|e| e.status.is_ok()).count();
    let status = if acked == multicast.len() {
        StatusCode::ACCEPTED
    } else if acked > 0 {
        StatusCode::MULTI_STATUS
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (
        status,
        Json(PublishAck {
            pub_id,
            multicast: Some(multicast),
        }),
    )
        .into_response()
}

async fn install_policy(
    State(state): State<Arc<FrontendState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let auth = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let mut req: PolicyRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(err) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {err}")),
    };
    if req.group.is_empty() {
        return error(StatusCode::BAD_REQUEST, "group must not be empty");
    }
    if let Err(err) = validate_all(&req.pub_constraints) {
        return error(StatusCode::BAD_REQUEST, err.to_string());
    }
    // Mint the id once so the broadcast installs one policy under one id
    // everywhere.
    let policy_id = req
        .policy_id
        .clone()
        .unwrap_or_else(PolicyId::random);
    req.policy_id = Some(policy_id.clone());

    let outcomes = fan_out(&state, |address| {
        state
            .http
            .post(format!("{address}/policies"))
            .header(header::AUTH_HASH, auth.as_str())
            .json(&req)
    })
    .await;

    let multicast: Vec<MulticastEntry> = outcomes
        .iter()
        .map(|(id, latency_ms, result)| MulticastEntry {
            matcher_id: *id,
            status: classify(result),
            latency_ms: *latency_ms,
        })
        .collect();
    let acked = multicast.iter().filter(|e| e.status.is_ok()).count();
    let status = if acked == multicast.len() {
        StatusCode::OK
    } else if acked > 0 {
        StatusCode::MULTI_STATUS
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (
        status,
        Json(PolicyAck {
            policy_id,
            multicast: Some(multicast),
        }),
    )
        .into_response()
}

async fn remove_policy(
    State(state): State<Arc<FrontendState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    Path(policy_id): Path<String>,
) -> Response {
    let auth = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let policy_id = match PolicyId::parse(&policy_id) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };

    let outcomes = fan_out(&state, |address| {
        state
            .http
            .delete(format!("{address}/policies/{policy_id}"))
            .header(header::AUTH_HASH, auth.as_str())
    })
    .await;

    // A policy lives on every matcher, so "removed" means any matcher
    // dropped its copy; an unreachable matcher may still hold one.
    let mut removed = false;
    let mut unreachable = Vec::new();
    for (id, _, result) in outcomes {
        match result {
            Ok(resp) if resp.status().is_success() => {
                if let Ok(ack) = resp.json::<RemoveAck>().await {
                    removed |= ack.removed;
                }
            }
            _ => unreachable.push(id),
        }
    }
    if !unreachable.is_empty() && !removed {
        return error(
            StatusCode::BAD_GATEWAY,
            format!("matchers unreachable: {unreachable:?}"),
        );
    }
    Json(RemoveAck { removed }).into_response()
}

async fn cluster(State(state): State<Arc<FrontendState>>) -> Response {
    Json(state.partition_map.clone()).into_response()
}

async fn update_config(
    State(state): State<Arc<FrontendState>>,
    body: Result<Json<ConfigUpdate>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(update) = match body {
        Ok(body) => body,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    let outcomes = fan_out(&state, |address| {
        state.http.post(format!("{address}/config")).json(&update)
    })
    .await;

    let mut doc: Option<ConfigDoc> = None;
    let mut failed = Vec::new();
    for (id, _, result) in outcomes {
        match result {
            Ok(resp) if resp.status().is_success() => {
                if let Ok(parsed) = resp.json::<ConfigDoc>().await {
                    doc = Some(parsed);
                }
            }
            _ => failed.push(id),
        }
    }
    match (doc, failed.is_empty()) {
        (Some(doc), true) => Json(doc).into_response(),
        _ => error(
            StatusCode::BAD_GATEWAY,
            format!("config update failed on matchers: {failed:?}"),
        ),
    }
}

#[derive(Deserialize)]
struct WsQuery {
    sub: String,
    matcher: usize,
}

async fn ws_attach(
    State(state): State<Arc<FrontendState>>,
    peer: Option<Extension<PeerIdentity>>,
    headers: HeaderMap,
    query: Result<Query<WsQuery>, axum::extract::rejection::QueryRejection>,
    upgrade: WebSocketUpgrade,
) -> Response {
    let auth = match identify(&state, peer.as_ref(), &headers) {
        Ok(auth) => auth,
        Err(resp) => return resp,
    };
    let Query(query) = match query {
        Ok(query) => query,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    let sub_id = match SubId::parse(&query.sub) {
        Ok(id) => id,
        Err(err) => return error(StatusCode::BAD_REQUEST, err.to_string()),
    };
    if query.matcher >= state.partition_map.len() {
        return error(
            StatusCode::BAD_REQUEST,
            format!(
                "matcher index {} out of range (cluster has {})",
                query.matcher,
                state.partition_map.len()
            ),
        );
    }

    // Connect upstream first: a refusal (404 unknown sub, 401 foreign sub)
    // must reach the client as that HTTP status, which is impossible once
    // the downstream upgrade completed.
    let endpoint = &state.partition_map.matchers[query.matcher];
    let upstream = match proxy::connect_upstream(&state, &endpoint.address, &sub_id, &auth).await {
        Ok(upstream) => upstream,
        Err(resp) => return resp,
    };
    upgrade.on_upgrade(move |client| proxy::relay(client, upstream))
}

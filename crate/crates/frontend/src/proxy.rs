//! WebSocket relay between a subscriber and its matcher.
//!
//! The upstream connection is established *before* the downstream upgrade
//! completes so an upstream refusal (404/401) reaches the client as that
//! HTTP status. Once both sides are up, frames are relayed verbatim in both
//! directions, one at a time per direction — the relay cannot reorder. A
//! close from either side is propagated with its close code.

use crate::FrontendState;
use axum::extract::ws::{self, WebSocket};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures_util::{SinkExt, StreamExt};
use sieve_core::wire::{header, ErrorBody};
use sieve_core::{AuthHash, SubId};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::protocol as tg;
use tokio_tungstenite::{Connector, MaybeTlsStream, WebSocketStream};

pub type Upstream = WebSocketStream<MaybeTlsStream<TcpStream>>;

/// Opens the upstream socket for `sub_id` on the given matcher, forwarding
/// the client's identity. An upstream HTTP refusal is converted into the
/// equivalent client-facing response.
pub async fn connect_upstream(
    state: &FrontendState,
    address: &str,
    sub_id: &SubId,
    auth: &AuthHash,
) -> Result<Upstream, Response> {
    let ws_address = address
        .replacen("https://", "wss://", 1)
        .replacen("http://", "ws://", 1);
    let url = format!("{ws_address}/ws?sub={sub_id}");
    let mut request = url
        .into_client_request()
        .map_err(|err| refusal(StatusCode::BAD_GATEWAY, format!("upstream url: {err}")))?;
    request.headers_mut().insert(
        header::AUTH_HASH,
        auth.as_str().parse().expect("hex is a valid header value"),
    );

    let connector = state.ws_tls.clone().map(Connector::Rustls);
    match tokio_tungstenite::connect_async_tls_with_config(request, None, false, connector).await {
        Ok((upstream, _)) => Ok(upstream),
        Err(tokio_tungstenite::tungstenite::Error::Http(resp)) => {
            let status = StatusCode::from_u16(resp.status().as_u16())
                .unwrap_or(StatusCode::BAD_GATEWAY);
            let body = resp.into_body().unwrap_or_default();
            Err((status, [("content-type", "application/json")], body).into_response())
        }
        Err(err) => Err(refusal(
            StatusCode::BAD_GATEWAY,
            format!("matcher unreachable: {err}"),
        )),
    }
}

fn refusal(status: StatusCode, msg: String) -> Response {
    (status, Json(ErrorBody::new(msg))).into_response()
}

/// Relays frames between the client and the matcher until either side
/// closes; the close code crosses the relay unchanged.
pub async fn relay(client: WebSocket, upstream: Upstream) {
    let (mut client_tx, mut client_rx) = client.split();
    let (mut upstream_tx, mut upstream_rx) = upstream.split();

    loop {
        tokio::select! {
            from_upstream = upstream_rx.next() => match from_upstream {
                Some(Ok(msg)) => {
                    let is_close = matches!(msg, tg::Message::Close(_));
                    let Some(converted) = upstream_to_client(msg) else { continue };
                    if client_tx.send(converted).await.is_err() || is_close {
                        break;
                    }
                }
                Some(Err(_)) | None => {
                    let _ = client_tx.send(ws::Message::Close(None)).await;
                    break;
                }
            },
            from_client = client_rx.next() => match from_client {
                Some(Ok(msg)) => {
                    let is_close = matches!(msg, ws::Message::Close(_));
                    let Some(converted) = client_to_upstream(msg) else { continue };
                    if upstream_tx.send(converted).await.is_err() || is_close {
                        break;
                    }
                }
                Some(Err(_)) | None => {
                    let _ = upstream_tx.send(tg::Message::Close(None)).await;
                    break;
                }
            },
        }
    }
}

fn upstream_to_client(msg: tg::Message) -> Option<ws::Message> {
    Some(match msg {
        tg::Message::Text(text) => ws::Message::Text(text.as_str().into()),
        tg::Message::Binary(bytes) => ws::Message::Binary(bytes),
        tg::Message::Ping(bytes) => ws::Message::Ping(bytes),
        tg::Message::Pong(bytes) => ws::Message::Pong(bytes),
        tg::Message::Close(frame) => ws::Message::Close(frame.map(|f| ws::CloseFrame {
            code: f.code.into(),
            reason: f.reason.as_str().into(),
        })),
        tg::Message::Frame(_) => return None,
    })
}

fn client_to_upstream(msg: ws::Message) -> Option<tg::Message> {
    Some(match msg {
        ws::Message::Text(text) => tg::Message::Text(text.as_str().into()),
        ws::Message::Binary(bytes) => tg::Message::Binary(bytes),
        ws::Message::Ping(bytes) => tg::Message::Ping(bytes),
        ws::Message::Pong(bytes) => tg::Message::Pong(bytes),
        ws::Message::Close(frame) => tg::Message::Close(frame.map(|f| tg::CloseFrame {
            code: f.code.into(),
            reason: f.reason.as_str().into(),
        })),
    })
}

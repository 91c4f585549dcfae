//! Serde DTOs for the cluster's HTTP and WebSocket protocol.
//!
//! The services, the SDK and the benchmark all speak through these types so
//! that the field names cannot drift. The publication body inside a
//! [`DeliveryEnvelope`] is a [`RawValue`]: subscribers receive the exact bytes
//! the publisher sent, not a re-serialization.

use crate::auth::AuthHash;
use crate::constraint::Constraint;
use crate::ids::{PolicyId, PubId, SubId};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

/// Header names used by the protocol.
pub mod header {
    /// Client identity in plaintext mode: 64 lowercase hex chars.
    pub const AUTH_HASH: &str = "x-auth-hash";
    /// Publication id assigned by the load balancer, propagated to matchers.
    pub const PUB_ID: &str = "x-pub-id";
    /// Publisher send timestamp (Unix milliseconds), echoed in envelopes for
    /// end-to-end latency measurement.
    pub const SEND_TS_MS: &str = "x-send-ts-ms";
}

/// WebSocket close code sent to a subscriber connection displaced by a newer
/// attachment for the same subscription.
pub const CLOSE_DISPLACED: u16 = 4000;

/// `POST /subscriptions` on a matcher: the registering node supplies the id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatcherSubscribeRequest {
    pub sub_id: SubId,
    pub constraints: Vec<Constraint>,
}

/// `POST /subscriptions` on the load balancer: the id is minted there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LbSubscribeRequest {
    pub constraints: Vec<Constraint>,
}

/// Acknowledgement of a subscription registration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubscribeAck {
    pub sub_id: SubId,
    /// Partition index of the matcher holding the subscription.
    pub matcher_id: usize,
}

/// Acknowledgement of a removal (`DELETE /subscriptions/{id}`, `/policies/{id}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoveAck {
    pub removed: bool,
}

/// Per-matcher outcome of a load-balancer publication multicast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulticastStatus {
    /// The matcher acknowledged the publication.
    Ok,
    /// No answer within the per-matcher timeout.
    Timeout,
    /// Connection failed or the matcher answered with an unexpected status.
    Refused,
    /// The matcher's ingress queue was full.
    QueueFull,
}

impl MulticastStatus {
    pub fn is_ok(self) -> bool {
        matches!(self, MulticastStatus::Ok)
    }
}

/// One row of the multicast detail in a publish acknowledgement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MulticastEntry {
    pub matcher_id: usize,
    pub status: MulticastStatus,
    /// Time until that matcher's response (or timeout), milliseconds.
    pub latency_ms: f64,
}

/// Acknowledgement of `POST /publications`.
///
/// Matchers return just the id; the load balancer adds the per-matcher
/// multicast detail (complete on 202, partial failures visible on 207).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishAck {
    pub pub_id: PubId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multicast: Option<Vec<MulticastEntry>>,
}

/// `POST /policies`: the load balancer mints the id when absent; matchers
/// require it so the multicast installs one policy under one id everywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_id: Option<PolicyId>,
    pub pub_constraints: Vec<Constraint>,
    pub group: String,
}

/// Acknowledgement of a policy installation.
///
/// Matchers return just the id; the load balancer adds the per-matcher
/// broadcast detail, like [`PublishAck`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyAck {
    pub policy_id: PolicyId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multicast: Option<Vec<MulticastEntry>>,
}

/// One matched publication as delivered on a subscriber's WebSocket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeliveryEnvelope {
    pub sub_id: SubId,
    pub pub_id: PubId,
    /// The published JSON document, byte-for-byte as it was published.
    pub publication: Box<RawValue>,
    /// Wall-clock time the matcher matched the publication, Unix milliseconds.
    pub matched_ts: u64,
    /// Publisher's send timestamp, if it supplied one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub send_ts_ms: Option<u64>,
}

/// `GET /stats` document of a matcher.
///
/// Counter identity, exact once the node is quiescent (empty queue, no
/// envelope in flight): `delivered + dropped_no_connection +
/// dropped_buffer_overflow + policy_blocked == matched_pairs`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatcherStats {
    pub matcher_id: usize,
    /// Publications accepted into the work queue.
    pub received_pubs: u64,
    /// Publications rejected before matching (malformed or unflattenable).
    pub rejected: u64,
    /// (publication, subscription) pairs produced by content matching.
    pub matched_pairs: u64,
    /// Envelopes written to a subscriber socket.
    pub delivered: u64,
    /// Matched pairs whose subscriber had no live connection (including
    /// envelopes still buffered when the connection went away).
    pub dropped_no_connection: u64,
    /// Envelopes evicted from a full per-connection buffer (oldest first).
    pub dropped_buffer_overflow: u64,
    /// Matched pairs inspected by the permission check.
    pub policy_checked: u64,
    /// Matched pairs the permission check blocked.
    pub policy_blocked: u64,
    /// Publications currently waiting in the work queue.
    pub queue_depth: usize,
    pub worker_count: usize,
    /// Subscription-store mutation counter.
    pub generation: u64,
    pub subscription_count: usize,
    pub policy_count: usize,
    pub permission_filtering: bool,
}

/// `POST /config`: runtime-adjustable switches.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permission_filtering: Option<bool>,
}

/// Current runtime configuration, returned by `POST /config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub permission_filtering: bool,
}

/// JSON body of every non-2xx response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>) -> Self {
        ErrorBody { error: error.into() }
    }
}

/// Group membership table: subscriber identity to group names. Loaded from a
/// JSON file at service start; identities absent from the table are anonymous.
pub type GroupsFile = std::collections::HashMap<AuthHash, Vec<String>>;

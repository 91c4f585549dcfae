//! Shared semantic kernel of the sieve publish/subscribe cluster.
//!
//! Everything in this crate is pure computation: no sockets, no clocks, no
//! global state. The matcher service, the front-end load balancer, the client
//! SDK, and the benchmark harness all build on these definitions so that the
//! meaning of a subscription — which publications it selects, which partition
//! it lives on, which identity owns it — is decided in exactly one place.
//!
//! The pieces:
//!
//! * [`value`] — the four primitive attribute kinds and their ingestion rules.
//! * [`flatten`] — nested JSON documents to flat dotted-path attribute maps.
//! * [`constraint`] — subscription constraints and their evaluation semantics.
//! * [`policy`] — publisher-installed permission policies and the
//!   permission check applied after content matching.
//! * [`canonical`] — the canonical byte encoding of a constraint set
//!   (normative: equal constraint multisets encode to identical bytes).
//! * [`partition`] — FNV-1a 64 over the canonical bytes, modulo the matcher
//!   count; the routing rule that makes every node compute the same placement.
//! * [`auth`] — certificate-derived client identities.
//! * [`ids`] — 128-bit hex identifiers for publications, subscriptions and
//!   policies.
//! * [`wire`] — serde DTOs for the HTTP/WebSocket protocol, kept here so the
//!   services cannot drift apart on field names.

pub mod auth;
pub mod canonical;
pub mod constraint;
pub mod flatten;
pub mod ids;
pub mod partition;
pub mod policy;
pub mod value;
pub mod wire;

pub use auth::AuthHash;
pub use canonical::canonicalize;
pub use constraint::{eval_constraint, match_subscription, Constraint, Operator};
pub use flatten::{flatten, FlattenError};
pub use ids::{PolicyId, PubId, SubId};
pub use partition::{fnv1a_64, partition_of, MatcherEndpoint, PartitionMap};
pub use policy::{permission_check, SubscriptionPolicy, WILDCARD_GROUP};
pub use value::{AttributeValue, ValueKind};

use std::collections::HashMap;

/// A publication after flattening: dotted attribute paths to primitive values.
pub type AttrMap = HashMap<String, AttributeValue>;

/// A registered subscription: the owning identity, its cluster-unique id and
/// the conjunction of constraints it stands for.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Subscription {
    pub auth_hash: AuthHash,
    pub sub_id: SubId,
    pub constraints: Vec<Constraint>,
}

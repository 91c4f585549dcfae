//! The recorded trace of a run: everything needed to recompute expected
//! deliveries after the fact.
//!
//! A trace assumes the run_load discipline: all subscriptions and policies
//! were installed before the first publication, so expectation is a pure
//! cross product of accepted publications and registered subscriptions.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sieve_core::{AuthHash, Constraint, PubId, SubId};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSub {
    pub sub_id: SubId,
    pub auth_hash: AuthHash,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePolicy {
    pub pub_constraints: Vec<Constraint>,
    pub group: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePub {
    pub pub_id: PubId,
    /// The published document, byte-for-byte.
    pub body: Box<RawValue>,
    /// True only when every matcher acknowledged the multicast copy (a plain
    /// 202). Partially delivered publications are excluded from expectation —
    /// any deliveries they produced will surface as `extra`.
    pub fanout_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDelivery {
    pub sub_id: SubId,
    pub pub_id: PubId,
}

/// Full record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    /// Whether the matchers ran the permission stage during the run.
    pub permission_filtering: bool,
    pub subscriptions: Vec<TraceSub>,
    pub policies: Vec<TracePolicy>,
    /// Subscriber identity → group names (the cluster's group table).
    pub groups: BTreeMap<AuthHash, Vec<String>>,
    pub publications: Vec<TracePub>,
    pub deliveries: Vec<TraceDelivery>,
}

/// Outcome of comparing observed deliveries against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessRecord {
    /// Distinct (subscription, publication) pairs the oracle expects.
    pub expected_deliveries: u64,
    /// Delivery frames observed, repeats included.
    pub observed_deliveries: u64,
    /// Expected pairs never observed.
    pub missing: u64,
    /// Observations beyond the first of the same pair.
    pub duplicates: u64,
    /// Distinct observed pairs the oracle did not expect.
    pub extra: u64,
}

impl CorrectnessRecord {
    pub fn is_exact(&self) -> bool {
        self.missing == 0 && self.duplicates == 0 && self.extra == 0
    }
}

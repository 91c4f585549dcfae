//! Partition routing: which matcher owns a subscription.
//!
//! The cluster splits the subscription space across N matcher nodes. Placement
//! is a pure function of the subscription's canonical bytes, so any node (or
//! client) with the partition map computes the same answer with no
//! coordination: `FNV-1a-64(canonical bytes) mod N`.
//!
//! FNV-1a is hand-rolled here because the exact algorithm and constants are a
//! compatibility contract, not an implementation detail — the golden tests pin
//! published reference values.

use crate::canonical::canonicalize;
use crate::constraint::Constraint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// FNV-1a 64-bit offset basis.
pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
/// FNV-1a 64-bit prime.
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit hash.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Partition index of a constraint set in a cluster of `n` matchers.
///
/// `n` must be at least 1. Deterministic across processes and platforms.
pub fn partition_of(constraints: &[Constraint], n: usize) -> usize {
    assert!(n >= 1, "a cluster has at least one matcher");
    (fnv1a_64(&canonicalize(constraints)) % n as u64) as usize
}

/// One matcher node as published in the cluster's partition map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherEndpoint {
    /// Partition index, `0..N`.
    pub id: usize,
    /// Base URL of the matcher, e.g. `http://127.0.0.1:7101`.
    pub address: String,
}

/// The cluster routing table: matcher `id` owns partition `id` of `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMap {
    pub matchers: Vec<MatcherEndpoint>,
}

/// Why a partition map was rejected.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionMapError {
    #[error("a partition map needs at least one matcher")]
    Empty,
    #[error("matcher at position {position} has id {id}, expected ids 0..n in order")]
    BadIds { position: usize, id: usize },
}

impl PartitionMap {
    /// Builds a map from matcher base URLs, assigning ids by position.
    pub fn from_addresses<I, S>(addresses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PartitionMap {
            matchers: addresses
                .into_iter()
                .enumerate()
                .map(|(id, address)| MatcherEndpoint {
                    id,
                    address: address.into(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.matchers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchers.is_empty()
    }

    /// Checks the structural invariant: non-empty, ids exactly `0..n` in order.
    pub fn validate(&self) -> Result<(), PartitionMapError> {
        if self.matchers.is_empty() {
            return Err(PartitionMapError::Empty);
        }
        for (position, m) in self.matchers.iter().enumerate() {
            if m.id != position {
                return Err(PartitionMapError::BadIds { position, id: m.id });
            }
        }
        Ok(())
    }

    /// The matcher that owns the given constraint set.
    pub fn route(&self, constraints: &[Constraint]) -> &MatcherEndpoint {
        &self.matchers[partition_of(constraints, self.matchers.len())]
    }
}

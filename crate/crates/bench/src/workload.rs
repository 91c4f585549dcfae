//! The generated workload: subscriptions, policies, group table and the
//! publication stream spec, all serializable and byte-stable.

use crate::profile::{AttributeSpec, WorkloadProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sieve_core::{AuthHash, Constraint};
use std::collections::BTreeMap;
use std::path::Path;

/// One generated subscriber: its identity and what it subscribes to. Group
/// membership lives in [`Workload::groups`], keyed by the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSub {
    pub auth_hash: AuthHash,
    pub constraints: Vec<Constraint>,
}

/// One generated permission policy (installed by [`Workload::publisher`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPolicy {
    pub pub_constraints: Vec<Constraint>,
    pub group: String,
}

/// Parameters of the publication stream. Bodies are addressed by index, so a
/// run can draw any prefix (or extension) of the stream without regenerating
/// the workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationSpec {
    pub seed: u64,
    /// Default number of publications (profile rate × duration).
    pub count: u64,
    /// Default offered rate, pubs/s.
    pub rate: f64,
}

/// A fully generated workload, ready to run and to serialize.
///
/// `groups` is a `BTreeMap` so serialization order — and therefore the
/// generated bytes — are stable for a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub profile: WorkloadProfile,
    pub subscriptions: Vec<GeneratedSub>,
    pub policies: Vec<GeneratedPolicy>,
    /// Subscriber identity → group names; identities absent are anonymous.
    pub groups: BTreeMap<AuthHash, Vec<String>>,
    /// Identity that publishes and installs the policies.
    pub publisher: AuthHash,
    pub publications: PublicationSpec,
}

impl Workload {
    /// Writes the group table in the format the matcher service loads at
    /// startup (`groups_file` in its configuration).
    pub fn write_groups_file(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.groups).expect("group table serializes");
        std::fs::write(path, text)
    }
}

/// Renders publication number `index` of the stream: a flat JSON object with
/// every universe attribute drawn uniformly from its range.
///
/// Deterministic in `(universe, seed, index)` and independent of every other
/// index, so load drivers and verifiers regenerate identical bodies.
pub fn publication_body(universe: &[AttributeSpec], seed: u64, index: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)));
    let mut body = String::with_capacity(universe.len() * 24 + 2);
    body.push('{');
    for (i, attr) in universe.iter().enumerate() {
        if i > 0 {
            body.push(',');
        }
        let value: f64 = rng.gen_range(attr.min..attr.max);
        body.push_str(&serde_json::to_string(&attr.key).expect("keys serialize"));
        body.push(':');
        body.push_str(&serde_json::to_string(&value).expect("numbers serialize"));
    }
    body.push('}');
    body
}

/// Splits one seed into decorrelated streams (subscriptions, identities,
/// publications, …) so regenerating one stream never shifts another.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! In-memory subscription and policy store of one matcher node.
//!
//! The store holds the partition-local state a matcher matches against:
//! registered subscriptions keyed by `(owner identity, subscription id)` and
//! the installed permission policies. It is shared between the HTTP handlers
//! (mutations) and the matching workers (read passes), so all access goes
//! through a reader/writer lock and every mutation bumps a generation
//! counter. A matching pass runs under a single read acquisition: each
//! publication sees one consistent generation — never half of a mutation.
//!
//! Content matching here is deliberately permission-blind; the permission
//! check is a separate pipeline stage applied by the caller to the pairs this
//! store produces (see [`MatchView`]).

use parking_lot::RwLock;
use sieve_core::{
    match_subscription, AttrMap, AuthHash, Constraint, PolicyId, SubId, Subscription,
    SubscriptionPolicy,
};
use std::collections::HashMap;
use thiserror::Error;

/// Registration failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("subscription capacity ({0}) exhausted")]
    CapacityExceeded(usize),
}

/// What a registration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegisterOutcome {
    Created,
    /// Same `(owner, sub_id)` was present; its constraints were replaced.
    Replaced,
}

/// Relation of an `(identity, sub_id)` pair to the stored subscriptions,
/// used to answer WebSocket attachment attempts precisely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ownership {
    /// The pair is registered.
    Owned,
    /// The sub_id exists but belongs to a different identity.
    OwnedByOther,
    /// No such sub_id on this node.
    Unknown,
}

/// Result of one matching pass: every pair is from the same store generation,
/// and the policy snapshot is the one that generation saw.
#[derive(Debug, Clone)]
pub struct MatchView {
    /// Subscriptions whose constraints the publication satisfied.
    pub pairs: Vec<(AuthHash, SubId)>,
    /// Policies installed at that generation (for the permission stage).
    pub policies: Vec<SubscriptionPolicy>,
    pub generation: u64,
}

#[derive(Default)]
struct Inner {
    by_user: HashMap<AuthHash, HashMap<SubId, Vec<Constraint>>>,
    /// Owners per sub_id, maintained for attachment diagnosis; ids are minted
    /// randomly so the vector almost always has one element.
    owners: HashMap<SubId, Vec<AuthHash>>,
    policies: Vec<SubscriptionPolicy>,
    generation: u64,
    total: usize,
}

/// Thread-safe subscription/policy store.
pub struct SubscriptionStore {
    inner: RwLock<Inner>,
    max_subscriptions: Option<usize>,
}

impl Default for SubscriptionStore {
    fn default() -> Self {
        Self::new()
    }
}

impl SubscriptionStore {
    /// Unbounded store.
    pub fn new() -> Self {
        SubscriptionStore {
            inner: RwLock::new(Inner::default()),
            max_subscriptions: None,
        }
    }

    /// Store refusing registrations beyond `limit` distinct subscriptions
    /// (replacements always succeed).
    pub fn with_capacity(limit: usize) -> Self {
        SubscriptionStore {
            inner: RwLock::new(Inner::default()),
            max_subscriptions: Some(limit),
        }
    }

    /// Registers or replaces a subscription.
    pub fn register(&self, sub: Subscription) -> Result<RegisterOutcome, StoreError> {
        let mut inner = self.inner.write();
        let user_subs = inner.by_user.entry(sub.auth_hash.clone()).or_default();
        let replaced = user_subs.insert(sub.sub_id.clone(), sub.constraints).is_some();
        if !replaced {
            if let Some(limit) = self.max_subscriptions {
                if inner.total >= limit {
                    // Undo the insertion that overshot the limit.
                    let user_subs = inner.by_user.get_mut(&sub.auth_hash).unwrap();
                    user_subs.remove(&sub.sub_id);
                    if user_subs.is_empty() {
                        inner.by_user.remove(&sub.auth_hash);
                    }
                    return Err(StoreError::CapacityExceeded(limit));
                }
            }
            inner.total += 1;
            inner
                .owners
                .entry(sub.sub_id.clone())
                .or_default()
                .push(sub.auth_hash.clone());
        }
        inner.generation += 1;
        Ok(if replaced {
            RegisterOutcome::Replaced
        } else {
            RegisterOutcome::Created
        })
    }

    /// Removes a subscription of the given owner. Returns whether anything
    /// was removed; other identities' subscriptions are unreachable here.
    pub fn remove(&self, auth: &AuthHash, sub_id: &SubId) -> bool {
        let mut inner = self.inner.write();
        let Some(user_subs) = inner.by_user.get_mut(auth) else {
            return false;
        };
        if user_subs.remove(sub_id).is_none() {
            return false;
        }
        if user_subs.is_empty() {
            inner.by_user.remove(auth);
        }
        inner.total -= 1;
        if let Some(owners) = inner.owners.get_mut(sub_id) {
            owners.retain(|o| o != auth);
            if owners.is_empty() {
                inner.owners.remove(sub_id);
            }
        }
        inner.generation += 1;
        true
    }

    /// How `(auth, sub_id)` relates to the stored subscriptions.
    pub fn ownership(&self, auth: &AuthHash, sub_id: &SubId) -> Ownership {
        let inner = self.inner.read();
        if inner
            .by_user
            .get(auth)
            .is_some_and(|subs| subs.contains_key(sub_id))
        {
            Ownership::Owned
        } else if inner.owners.contains_key(sub_id) {
            Ownership::OwnedByOther
        } else {
            Ownership::Unknown
        }
    }

    /// All subscriptions matching a flattened publication. Content matching
    /// only — permission filtering happens downstream.
    pub fn match_all(&self, attrs: &AttrMap) -> Vec<(AuthHash, SubId)> {
        self.matching_view(attrs).pairs
    }

    /// One consistent matching pass: matched pairs plus the policy snapshot
    /// of the same generation.
    pub fn matching_view(&self, attrs: &AttrMap) -> MatchView {
        let inner = self.inner.read();
        let mut pairs = Vec::new();
        for (auth, subs) in &inner.by_user {
            for (sub_id, constraints) in subs {
                if match_subscription(constraints, attrs) {
                    pairs.push((auth.clone(), sub_id.clone()));
                }
            }
        }
        MatchView {
            pairs,
            policies: inner.policies.clone(),
            generation: inner.generation,
        }
    }

    /// Installs a policy, replacing any existing policy with the same id.
    pub fn install_policy(&self, policy: SubscriptionPolicy) -> RegisterOutcome {
        let mut inner = self.inner.write();
        inner.generation += 1;
        if let Some(slot) = inner
            .policies
            .iter_mut()
            .find(|p| p.policy_id == policy.policy_id)
        {
            *slot = policy;
            RegisterOutcome::Replaced
        } else {
            inner.policies.push(policy);
            RegisterOutcome::Created
        }
    }

    /// Removes a policy if `owner` installed it.
    pub fn remove_policy(&self, owner: &AuthHash, policy_id: &PolicyId) -> bool {
        let mut inner = self.inner.write();
        let before = inner.policies.len();
        inner
            .policies
            .retain(|p| !(p.policy_id == *policy_id && p.owner == *owner));
        let removed = inner.policies.len() != before;
        if removed {
            inner.generation += 1;
        }
        removed
    }

    /// Snapshot of the installed policies.
    pub fn policies(&self) -> Vec<SubscriptionPolicy> {
        self.inner.read().policies.clone()
    }

    /// Constraints of one subscription, if registered.
    pub fn constraints_of(&self, auth: &AuthHash, sub_id: &SubId) -> Option<Vec<Constraint>> {
        self.inner
            .read()
            .by_user
            .get(auth)
            .and_then(|subs| subs.get(sub_id))
            .cloned()
    }

    /// Mutation counter; increments on every successful register/remove/
    /// install/remove-policy.
    pub fn generation(&self) -> u64 {
        self.inner.read().generation
    }

    pub fn subscription_count(&self) -> usize {
        self.inner.read().total
    }

    pub fn policy_count(&self) -> usize {
        self.inner.read().policies.len()
    }
}

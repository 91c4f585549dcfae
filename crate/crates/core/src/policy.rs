//! Publisher-installed permission policies.
//!
//! A policy pairs a set of publication constraints with a subscriber group:
//! "for publications looking like this, subscribers of that group may receive
//! them". Policies restrict delivery only collectively — the check runs after
//! content matching and decides whether a matched pair is actually delivered:
//!
//! 1. Collect the policies whose `pub_constraints` match the publication.
//! 2. No policy matched → the publication is unrestricted, deliver.
//! 3. Otherwise each matching policy is an independent grant (OR): deliver
//!    iff at least one names the wildcard group or a group the subscriber
//!    belongs to.
//!
//! Group membership is deployment configuration keyed by subscriber identity;
//! subscribers with no entry are anonymous and reachable for restricted
//! publications only through the wildcard group.

use crate::auth::AuthHash;
use crate::constraint::{match_subscription, Constraint};
use crate::ids::PolicyId;
use crate::AttrMap;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Group name that grants delivery to every subscriber, anonymous included.
pub const WILDCARD_GROUP: &str = "*";

/// A stored permission policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionPolicy {
    pub policy_id: PolicyId,
    /// Identity that installed the policy; only it may remove the policy.
    pub owner: AuthHash,
    /// Publications the policy speaks for (same semantics as subscriptions).
    pub pub_constraints: Vec<Constraint>,
    /// Group granted delivery, or [`WILDCARD_GROUP`].
    pub group: String,
}

/// Decides whether a matched (publication, subscriber) pair may be delivered.
///
/// `subscriber_groups` is the group set of the matched subscriber (empty for
/// anonymous subscribers). Total, like constraint evaluation.
pub fn permission_check(
    policies: &[SubscriptionPolicy],
    attrs: &AttrMap,
    subscriber_groups: &HashSet<String>,
) -> bool {
    let mut restricted = false;
    for policy in policies {
        if !match_subscription(&policy.pub_constraints, attrs) {
            continue;
        }
        restricted = true;
        if policy.group == WILDCARD_GROUP || subscriber_groups.contains(&policy.group) {
            return true;
        }
    }
    !restricted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{Constraint, Operator};
    use crate::flatten::flatten;
    use serde_json::json;

    fn policy(id: u8, constraints: Vec<Constraint>, group: &str) -> SubscriptionPolicy {
        SubscriptionPolicy {
            policy_id: PolicyId::parse(&format!("{:032x}", id)).unwrap(),
            owner: AuthHash::parse(&"ab".repeat(32)).unwrap(),
            pub_constraints: constraints,
            group: group.into(),
        }
    }

    fn groups(names: &[&str]) -> HashSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Policy restricting one truck's publications to group A.
    fn truck_bcd_policy() -> SubscriptionPolicy {
        policy(
            1,
            vec![
                Constraint::new("id", Operator::Eq, "truck-bcd"),
                Constraint::new("group", Operator::Eq, "A"),
            ],
            "A",
        )
    }

    #[test]
    fn no_policies_means_unrestricted_delivery() {
        let attrs = flatten(&json!({"id": "truck-abc"})).unwrap();
        assert!(permission_check(&[], &attrs, &groups(&[])));
    }

    #[test]
    fn unmatched_policies_leave_a_publication_unrestricted() {
        let attrs = flatten(&json!({"id": "truck-abc", "group": "B"})).unwrap();
        assert!(permission_check(
            &[truck_bcd_policy()],
            &attrs,
            &groups(&[])
        ));
    }

    #[test]
    fn matching_policy_gates_delivery_on_group_membership() {
        let attrs = flatten(&json!({"id": "truck-bcd", "group": "A"})).unwrap();
        let policies = [truck_bcd_policy()];
        assert!(permission_check(&policies, &attrs, &groups(&["A"])));
        assert!(permission_check(&policies, &attrs, &groups(&["A", "C"])));
        assert!(!permission_check(&policies, &attrs, &groups(&["B"])));
        assert!(!permission_check(&policies, &attrs, &groups(&[])));
    }

    #[test]
    fn wildcard_group_reaches_everyone_including_anonymous() {
        let attrs = flatten(&json!({"id": "truck-bcd", "group": "A"})).unwrap();
        let policies = [policy(
            2,
            vec![Constraint::new("id", Operator::Eq, "truck-bcd")],
            WILDCARD_GROUP,
        )];
        assert!(permission_check(&policies, &attrs, &groups(&[])));
        assert!(permission_check(&policies, &attrs, &groups(&["B"])));
    }

    #[test]
    fn matching_policies_combine_as_independent_grants() {
        let attrs = flatten(&json!({"kind": "alert"})).unwrap();
        let restrict_to_a = policy(3, vec![Constraint::new("kind", Operator::Eq, "alert")], "A");
        let restrict_to_b = policy(4, vec![Constraint::new("kind", Operator::Eq, "alert")], "B");
        // Either grant suffices.
        assert!(permission_check(
            &[restrict_to_a.clone(), restrict_to_b.clone()],
            &attrs,
            &groups(&["B"])
        ));
        // Neither grants: blocked.
        assert!(!permission_check(
            &[restrict_to_a, restrict_to_b],
            &attrs,
            &groups(&["C"])
        ));
    }

    #[test]
    fn empty_pub_constraints_restrict_every_publication() {
        let attrs = flatten(&json!({"anything": 1})).unwrap();
        let policies = [policy(5, vec![], "A")];
        assert!(permission_check(&policies, &attrs, &groups(&["A"])));
        assert!(!permission_check(&policies, &attrs, &groups(&[])));
    }
}

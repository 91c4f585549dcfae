//! Brute-force delivery oracle, implemented from the protocol rules alone.
//!
//! This module recomputes expected deliveries without calling any of the
//! broker's evaluation routines — it parses publication bodies itself,
//! flattens them itself and applies the matching and permission rules in its
//! own words. Keeping the code paths disjoint is the point: a bug shared
//! between the system and its verifier would verify itself.
//!
//! Rules implemented (and nothing else):
//! * A publication is a JSON object; nested object fields and array elements
//!   flatten to dotted paths (`box.lat.0`), primitives are the leaves.
//! * A subscription is an AND of constraints; the empty set matches all.
//! * `eq`/`ne` compare within one primitive kind; a missing key fails every
//!   operator; `gt/ge/lt/le` require numbers on both sides.
//! * Policies whose constraints match the publication restrict it: the
//!   subscriber must be in some matching policy's group (or the policy names
//!   `*`). With no matching policy the publication is unrestricted. With the
//!   permission stage disabled, content matching alone decides.

use crate::trace::{CorrectnessRecord, Trace, TraceSub};
use serde_json::Value;
use sieve_core::value::AttributeValue;
use sieve_core::{Constraint, Operator};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Flat view of one publication: dotted path → primitive JSON value.
type FlatDoc = BTreeMap<String, Value>;

/// Recomputes expected deliveries for a recorded run and diffs them against
/// the observed ones. Total: malformed trace entries count as non-matching
/// rather than erroring.
pub fn verify(trace: &Trace) -> CorrectnessRecord {
    let mut expected: HashSet<(&str, &str)> = HashSet::new();

    for publication in trace.publications.iter().filter(|p| p.fanout_ok) {
        let Some(doc) = parse_flat(publication.body.get()) else {
            continue;
        };
        let admitted_groups = if trace.permission_filtering {
            admitted_groups(&trace.policies, &doc)
        } else {
            Admitted::Everyone
        };
        for sub in &trace.subscriptions {
            if !subscription_matches(&sub.constraints, &doc) {
                continue;
            }
            if admitted(&admitted_groups, sub, trace) {
                expected.insert((sub.sub_id.as_str(), publication.pub_id.as_str()));
            }
        }
    }

    let mut observed: HashMap<(&str, &str), u64> = HashMap::new();
    for delivery in &trace.deliveries {
        *observed
            .entry((delivery.sub_id.as_str(), delivery.pub_id.as_str()))
            .or_insert(0) += 1;
    }

    let missing = expected
        .iter()
        .filter(|pair| !observed.contains_key(*pair))
        .count() as u64;
    let duplicates: u64 = observed.values().map(|n| n - 1).sum();
    let extra = observed
        .keys()
        .filter(|pair| !expected.contains(*pair))
        .count() as u64;

    CorrectnessRecord {
        expected_deliveries: expected.len() as u64,
        observed_deliveries: trace.deliveries.len() as u64,
        missing,
        duplicates,
        extra,
    }
}

/// Who may receive a restricted publication.
enum Admitted {
    /// No policy matched (or the stage is off): unrestricted.
    Everyone,
    /// Matching policies granted these groups; `wildcard` if any granted `*`.
    Groups { names: HashSet<String>, wildcard: bool },
}

fn admitted_groups(policies: &[crate::trace::TracePolicy], doc: &FlatDoc) -> Admitted {
    let mut names = HashSet::new();
    let mut wildcard = false;
    let mut restricted = false;
    for policy in policies {
        if !subscription_matches(&policy.pub_constraints, doc) {
            continue;
        }
        restricted = true;
        if policy.group == "*" {
            wildcard = true;
        } else {
            names.insert(policy.group.clone());
        }
    }
    if restricted {
        Admitted::Groups { names, wildcard }
    } else {
        Admitted::Everyone
    }
}

fn admitted(admission: &Admitted, sub: &TraceSub, trace: &Trace) -> bool {
    match admission {
        Admitted::Everyone => true,
        Admitted::Groups { wildcard: true, .. } => true,
        Admitted::Groups { names, .. } => trace
            .groups
            .get(&sub.auth_hash)
            .map_or(false, |memberships| memberships.iter().any(|g| names.contains(g))),
    }
}

fn subscription_matches(constraints: &[Constraint], doc: &FlatDoc) -> bool {
    constraints.iter().all(|c| constraint_passes(c, doc))
}

fn constraint_passes(constraint: &Constraint, doc: &FlatDoc) -> bool {
    let Some(actual) = doc.get(&constraint.key) else {
        return false;
    };
    match constraint.op {
        Operator::Eq => primitives_equal(actual, &constraint.val),
        Operator::Ne => !primitives_equal(actual, &constraint.val),
        Operator::Gt | Operator::Ge | Operator::Lt | Operator::Le => {
            let (Some(have), AttributeValue::Number(want)) =
                (actual.as_f64(), &constraint.val)
            else {
                return false;
            };
            match constraint.op {
                Operator::Gt => have > *want,
                Operator::Ge => have >= *want,
                Operator::Lt => have < *want,
                Operator::Le => have <= *want,
                _ => unreachable!(),
            }
        }
    }
}

fn primitives_equal(actual: &Value, want: &AttributeValue) -> bool {
    match want {
        AttributeValue::Text(s) => actual.as_str() == Some(s.as_str()),
        AttributeValue::Number(f) => actual.as_f64() == Some(*f),
        AttributeValue::Boolean(b) => actual.as_bool() == Some(*b),
        AttributeValue::Null => actual.is_null(),
    }
}

/// Parses and flattens a publication body; `None` for anything the broker
/// would have rejected (non-object top level, non-finite number, path
/// collision) — such publications never enter the expectation set anyway
/// because the service refuses them before fan-out.
fn parse_flat(body: &str) -> Option<FlatDoc> {
    let doc: Value = serde_json::from_str(body).ok()?;
    let Value::Object(fields) = doc else {
        return None;
    };
    let mut flat = FlatDoc::new();
    for (key, node) in fields {
        descend(key, node, &mut flat)?;
    }
    Some(flat)
}

fn descend(path: String, node: Value, flat: &mut FlatDoc) -> Option<()> {
    match node {
        Value::Object(fields) => {
            for (key, child) in fields {
                descend(format!("{path}.{key}"), child, flat)?;
            }
        }
        Value::Array(items) => {
            for (index, child) in items.into_iter().enumerate() {
                descend(format!("{path}.{index}"), child, flat)?;
            }
        }
        leaf => {
            if let Some(f) = leaf.as_f64() {
                if !f.is_finite() {
                    return None;
                }
            }
            if flat.insert(path, leaf).is_some() {
                return None;
            }
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{TraceDelivery, TracePolicy, TracePub};
    use serde_json::value::RawValue;
    use sieve_core::{AuthHash, PubId, SubId};

    fn sub(n: u8, constraints: Vec<Constraint>) -> TraceSub {
        TraceSub {
            sub_id: SubId::parse(&format!("{n:02x}").repeat(16)).unwrap(),
            auth_hash: AuthHash::parse(&format!("{n:02x}").repeat(32)).unwrap(),
            constraints,
        }
    }

    fn publication(n: u8, body: &str) -> TracePub {
        TracePub {
            pub_id: PubId::parse(&format!("{n:02x}").repeat(16)).unwrap(),
            body: RawValue::from_string(body.to_string()).unwrap(),
            fanout_ok: true,
        }
    }

    fn delivery(sub_n: u8, pub_n: u8) -> TraceDelivery {
        TraceDelivery {
            sub_id: SubId::parse(&format!("{sub_n:02x}").repeat(16)).unwrap(),
            pub_id: PubId::parse(&format!("{pub_n:02x}").repeat(16)).unwrap(),
        }
    }

    fn base_trace() -> Trace {
        Trace {
            permission_filtering: true,
            subscriptions: vec![],
            policies: vec![],
            groups: BTreeMap::new(),
            publications: vec![],
            deliveries: vec![],
        }
    }

    #[test]
    fn exact_runs_verify_clean() {
        let mut trace = base_trace();
        trace.subscriptions = vec![
            sub(1, vec![Constraint::new("lat", Operator::Gt, 50.0)]),
            sub(2, vec![Constraint::new("lat", Operator::Gt, 99.0)]),
        ];
        trace.publications = vec![publication(0xaa, r#"{"lat": 51.5}"#)];
        trace.deliveries = vec![delivery(1, 0xaa)];
        let record = verify(&trace);
        assert!(record.is_exact(), "{record:?}");
        assert_eq!(record.expected_deliveries, 1);
        assert_eq!(record.observed_deliveries, 1);
    }

    #[test]
    fn dropped_and_repeated_and_unexpected_frames_are_counted() {
        let mut trace = base_trace();
        trace.subscriptions = vec![
            sub(1, vec![]),
            sub(2, vec![Constraint::new("x", Operator::Eq, 1.0)]),
        ];
        trace.publications = vec![
            publication(0xaa, r#"{"x": 1}"#),
            publication(0xbb, r#"{"x": 2}"#),
        ];
        // sub 1 should get both; sub 2 only 0xaa. Observed: sub 1 got 0xaa
        // twice and never 0xbb; sub 2 additionally got 0xbb (unexpected).
        trace.deliveries = vec![
            delivery(1, 0xaa),
            delivery(1, 0xaa),
            delivery(2, 0xaa),
            delivery(2, 0xbb),
        ];
        let record = verify(&trace);
        assert_eq!(record.expected_deliveries, 3);
        assert_eq!(record.observed_deliveries, 4);
        assert_eq!(record.missing, 1, "sub 1 never saw 0xbb");
        assert_eq!(record.duplicates, 1, "sub 1 saw 0xaa twice");
        assert_eq!(record.extra, 1, "sub 2 got 0xbb it never matched");
    }

    #[test]
    fn policies_restrict_to_granted_groups_with_wildcard_override() {
        let mut trace = base_trace();
        trace.subscriptions = vec![sub(1, vec![]), sub(2, vec![]), sub(3, vec![])];
        trace.groups.insert(
            trace.subscriptions[0].auth_hash.clone(),
            vec!["ops".to_string()],
        );
        trace.groups.insert(
            trace.subscriptions[1].auth_hash.clone(),
            vec!["dev".to_string()],
        );
        // sub 3 is anonymous.
        trace.policies = vec![TracePolicy {
            pub_constraints: vec![Constraint::new("kind", Operator::Eq, "alert")],
            group: "ops".to_string(),
        }];
        trace.publications = vec![
            publication(0xaa, r#"{"kind": "alert"}"#),
            publication(0xbb, r#"{"kind": "status"}"#),
        ];
        // The alert goes only to ops; the status is unrestricted.
        trace.deliveries = vec![
            delivery(1, 0xaa),
            delivery(1, 0xbb),
            delivery(2, 0xbb),
            delivery(3, 0xbb),
        ];
        assert!(verify(&trace).is_exact());

        // A second wildcard policy on alerts opens them to everyone.
        trace.policies.push(TracePolicy {
            pub_constraints: vec![Constraint::new("kind", Operator::Eq, "alert")],
            group: "*".to_string(),
        });
        trace.deliveries.extend([delivery(2, 0xaa), delivery(3, 0xaa)]);
        assert!(verify(&trace).is_exact());
    }

    #[test]
    fn disabling_the_permission_stage_widens_expectation() {
        let mut trace = base_trace();
        trace.subscriptions = vec![sub(1, vec![])];
        trace.policies = vec![TracePolicy {
            pub_constraints: vec![],
            group: "ops".to_string(),
        }];
        trace.publications = vec![publication(0xaa, r#"{"x": 1}"#)];

        // Stage on: the anonymous subscriber is blocked, no delivery expected.
        trace.deliveries = vec![];
        assert!(verify(&trace).is_exact());

        // Stage off: the same frame must arrive.
        trace.permission_filtering = false;
        let record = verify(&trace);
        assert_eq!(record.expected_deliveries, 1);
        assert_eq!(record.missing, 1);
    }

    #[test]
    fn nested_documents_flatten_to_dotted_paths() {
        let mut trace = base_trace();
        trace.subscriptions = vec![sub(
            1,
            vec![Constraint::new("box.lat.1", Operator::Ge, 60.0)],
        )];
        trace.publications = vec![publication(0xaa, r#"{"box": {"lat": [50.0, 60.0]}}"#)];
        trace.deliveries = vec![delivery(1, 0xaa)];
        assert!(verify(&trace).is_exact());
    }

    #[test]
    fn partial_fanout_publications_are_excluded_from_expectation() {
        let mut trace = base_trace();
        trace.subscriptions = vec![sub(1, vec![])];
        trace.publications = vec![publication(0xaa, r#"{"x": 1}"#)];
        trace.publications[0].fanout_ok = false;
        // No deliveries: clean, because the pub never counts.
        assert!(verify(&trace).is_exact());
        // A delivery from the partially reached cluster shows up as extra.
        trace.deliveries = vec![delivery(1, 0xaa)];
        let record = verify(&trace);
        assert_eq!(record.extra, 1);
    }

    #[test]
    fn kind_rules_match_the_protocol() {
        let doc = parse_flat(r#"{"n": 5, "s": "5", "b": true, "z": null}"#).unwrap();
        // eq within a kind only.
        assert!(constraint_passes(&Constraint::new("n", Operator::Eq, 5.0), &doc));
        assert!(!constraint_passes(&Constraint::new("n", Operator::Eq, "5"), &doc));
        assert!(constraint_passes(&Constraint::new("s", Operator::Ne, 5.0), &doc));
        // missing key fails even ne.
        assert!(!constraint_passes(&Constraint::new("gone", Operator::Ne, 5.0), &doc));
        // ordered ops need numbers on both sides.
        assert!(!constraint_passes(&Constraint::new("s", Operator::Gt, 1.0), &doc));
        assert!(!constraint_passes(&Constraint::new("b", Operator::Le, 1.0), &doc));
        assert!(constraint_passes(&Constraint::new("n", Operator::Ge, 5.0), &doc));
        assert!(!constraint_passes(&Constraint::new("n", Operator::Gt, 5.0), &doc));
        // null equality.
        assert!(constraint_passes(
            &Constraint {
                key: "z".into(),
                op: Operator::Eq,
                val: AttributeValue::Null
            },
            &doc
        ));
    }

    #[test]
    fn rejected_documents_never_match() {
        assert!(parse_flat("[1, 2]").is_none());
        assert!(parse_flat("not json").is_none());
        assert!(parse_flat(r#"{"a": {"b": 1}, "a.b": 2}"#).is_none(), "path collision");
    }
}

//! Property tests over the matching kernel.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use sieve_core::{
    canonicalize, eval_constraint, flatten, match_subscription, partition_of, permission_check,
    AttrMap, AttributeValue, AuthHash, Constraint, Operator, PolicyId, SubscriptionPolicy,
};
use std::collections::HashSet;

fn arb_value() -> impl Strategy<Value = AttributeValue> {
    prop_oneof![
        "[a-z]{0,6}".prop_map(AttributeValue::Text),
        (-1.0e6..1.0e6f64).prop_map(|f| AttributeValue::number(f).unwrap()),
        (-20i32..20).prop_map(|i| AttributeValue::Number(f64::from(i))),
        any::<bool>().prop_map(AttributeValue::Boolean),
        Just(AttributeValue::Null),
    ]
}

fn arb_key() -> impl Strategy<Value = String> {
    // Small pool so constraints and attributes overlap often.
    prop_oneof![
        Just("lat".to_owned()),
        Just("lon".to_owned()),
        Just("id".to_owned()),
        Just("a.b".to_owned()),
        "[a-d]{1,2}",
    ]
}

fn arb_operator() -> impl Strategy<Value = Operator> {
    prop::sample::select(Operator::ALL.to_vec())
}

fn arb_constraint() -> impl Strategy<Value = Constraint> {
    (arb_key(), arb_operator(), arb_value()).prop_map(|(key, op, val)| Constraint { key, op, val })
}

fn arb_attrs() -> impl Strategy<Value = AttrMap> {
    prop::collection::hash_map(arb_key(), arb_value(), 0..8)
}

fn arb_json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        "[a-z]{0,4}".prop_map(Value::String),
        (-1000..1000i32).prop_map(|n| json!(n)),
        (-10.0..10.0f64).prop_map(|f| json!(f)),
        any::<bool>().prop_map(Value::Bool),
        Just(Value::Null),
    ]
}

fn arb_json_doc() -> impl Strategy<Value = Value> {
    let leaf = arb_json_leaf();
    let node = leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::hash_map("[a-e]{1,3}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    });
    prop::collection::hash_map("[a-e]{1,3}", node, 0..5)
        .prop_map(|m| Value::Object(m.into_iter().collect()))
}

proptest! {
    /// A subscription is exactly the conjunction of its constraints.
    #[test]
    fn subscription_is_the_and_of_its_constraints(
        constraints in prop::collection::vec(arb_constraint(), 0..6),
        attrs in arb_attrs(),
    ) {
        let whole = match_subscription(&constraints, &attrs);
        let parts = constraints.iter().all(|c| match_subscription(std::slice::from_ref(c), &attrs));
        prop_assert_eq!(whole, parts);
    }

    /// Evaluation is total: any constraint against any attribute map yields a
    /// boolean without panicking, and repeating it yields the same boolean.
    #[test]
    fn evaluation_is_total_and_deterministic(
        constraint in arb_constraint(),
        attrs in arb_attrs(),
    ) {
        let first = eval_constraint(&constraint, &attrs);
        let second = eval_constraint(&constraint, &attrs);
        prop_assert_eq!(first, second);
    }

    /// Flattening its own output changes nothing.
    #[test]
    fn flattening_is_idempotent(doc in arb_json_doc()) {
        let Ok(once) = flatten(&doc) else {
            // Collisions are legal generator output; nothing to check.
            return Ok(());
        };
        let as_json = Value::Object(once.iter().map(|(k, v)| (k.clone(), v.to_json())).collect());
        let twice = flatten(&as_json).unwrap();
        prop_assert_eq!(once, twice);
    }

    /// Canonical bytes ignore the order constraints were written in.
    #[test]
    fn canonical_bytes_are_permutation_invariant(
        constraints in prop::collection::vec(arb_constraint(), 0..8),
        seed in any::<u64>(),
    ) {
        let mut shuffled = constraints.clone();
        shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        prop_assert_eq!(canonicalize(&constraints), canonicalize(&shuffled));
    }

    /// The canonical rendering of a number parses back to the same double.
    #[test]
    fn number_rendering_roundtrips(f in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
        let v = AttributeValue::number(f).unwrap();
        let rendered = sieve_core::canonical::render_value(&v);
        prop_assert_eq!(rendered.parse::<f64>().unwrap(), v.as_number().unwrap());
        prop_assert!(!rendered.contains(['e', 'E']), "rendering is positional: {}", rendered);
    }

    /// Partition indices stay in range and only depend on the constraint set.
    #[test]
    fn partitioning_is_in_range_and_order_free(
        constraints in prop::collection::vec(arb_constraint(), 0..6),
        n in 1usize..32,
        seed in any::<u64>(),
    ) {
        let p = partition_of(&constraints, n);
        prop_assert!(p < n);
        let mut shuffled = constraints.clone();
        shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        prop_assert_eq!(partition_of(&shuffled, n), p);
    }

    /// With no policies installed every matched pair is deliverable, and a
    /// single wildcard policy keeps it that way.
    #[test]
    fn no_policies_means_unrestricted(attrs in arb_attrs(), groups in prop::collection::hash_set("[A-C]", 0..3)) {
        prop_assert!(permission_check(&[], &attrs, &groups));
        let wildcard = SubscriptionPolicy {
            policy_id: PolicyId::parse(&"0".repeat(32)).unwrap(),
            owner: AuthHash::parse(&"00".repeat(32)).unwrap(),
            pub_constraints: vec![],
            group: "*".to_owned(),
        };
        prop_assert!(permission_check(&[wildcard], &attrs, &groups));
    }

    /// Installing a first restrictive policy never enlarges the delivered
    /// set, and a policy matching nothing changes nothing.
    #[test]
    fn first_policy_only_restricts(
        attrs in arb_attrs(),
        constraints in prop::collection::vec(arb_constraint(), 0..3),
        group in "[A-C]",
        subscriber_groups in prop::collection::hash_set("[A-C]", 0..3),
    ) {
        let policy = SubscriptionPolicy {
            policy_id: PolicyId::parse(&"1".repeat(32)).unwrap(),
            owner: AuthHash::parse(&"00".repeat(32)).unwrap(),
            pub_constraints: constraints.clone(),
            group,
        };
        let unrestricted = permission_check(&[], &attrs, &subscriber_groups);
        let restricted = permission_check(std::slice::from_ref(&policy), &attrs, &subscriber_groups);
        // restricted -> unrestricted (no enlargement from the empty set).
        prop_assert!(!restricted || unrestricted);
        if !match_subscription(&constraints, &attrs) {
            // A policy that does not speak for this publication leaves it
            // unrestricted.
            prop_assert!(restricted);
        }
    }
}

/// Matching policies act as independent grants: blocked pairs can become
/// deliverable when another grant is installed, and the wildcard grant always
/// suffices. (This is the OR combination rule, pinned as a unit property.)
#[test]
fn grants_combine_with_or() {
    let attrs: AttrMap = flatten(&json!({"kind": "alert"})).unwrap();
    let mk = |group: &str| SubscriptionPolicy {
        policy_id: PolicyId::random(),
        owner: AuthHash::parse(&"00".repeat(32)).unwrap(),
        pub_constraints: vec![Constraint::new("kind", Operator::Eq, "alert")],
        group: group.to_owned(),
    };
    let to_a = mk("A");
    let to_star = mk("*");
    let nobody: HashSet<String> = HashSet::new();
    assert!(!permission_check(std::slice::from_ref(&to_a), &attrs, &nobody));
    assert!(permission_check(&[to_a, to_star], &attrs, &nobody));
}

//! Matching behavior of the store against realistic subscription loads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use sieve_core::{
    flatten, match_subscription, AuthHash, Constraint, Operator, PolicyId, SubId, Subscription,
    SubscriptionPolicy,
};
use sieve_store::SubscriptionStore;
use std::sync::Arc;

fn auth(n: u32) -> AuthHash {
    AuthHash::parse(&format!("{n:08x}").repeat(8)).unwrap()
}

fn sub_id(n: u32) -> SubId {
    SubId::parse(&format!("{n:032x}")).unwrap()
}

#[test]
fn the_lat_range_subscription_matches_the_gps_publication() {
    let store = SubscriptionStore::new();
    store
        .register(Subscription {
            auth_hash: auth(1),
            sub_id: sub_id(1),
            constraints: vec![
                Constraint::new("lat", Operator::Gt, 50.0),
                Constraint::new("lat", Operator::Lt, 60.0),
            ],
        })
        .unwrap();

    let attrs = flatten(&json!({"id": "truck-abc", "lat": 51.0504, "lon": 13.7373})).unwrap();
    let pairs = store.match_all(&attrs);
    assert_eq!(pairs, vec![(auth(1), sub_id(1))]);

    let outside = flatten(&json!({"id": "truck-abc", "lat": 49.0})).unwrap();
    assert!(store.match_all(&outside).is_empty());
}

#[test]
fn match_all_is_permission_blind() {
    let store = SubscriptionStore::new();
    store
        .register(Subscription {
            auth_hash: auth(1),
            sub_id: sub_id(1),
            constraints: vec![],
        })
        .unwrap();
    // A policy restricting everything to group "A" must not change what
    // match_all returns; filtering is the next stage's job.
    store.install_policy(SubscriptionPolicy {
        policy_id: PolicyId::parse(&"9".repeat(32)).unwrap(),
        owner: auth(2),
        pub_constraints: vec![],
        group: "A".into(),
    });
    let attrs = flatten(&json!({"x": 1})).unwrap();
    let view = store.matching_view(&attrs);
    assert_eq!(view.pairs.len(), 1);
    assert_eq!(view.policies.len(), 1);
}

#[test]
fn matched_pairs_agree_with_per_subscription_evaluation() {
    // 256 subscriptions with 40 constraints each, the dense benchmark shape;
    // the store must agree with direct evaluation of every subscription.
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let store = SubscriptionStore::new();
    let mut all: Vec<(u32, Vec<Constraint>)> = Vec::new();
    for i in 0..256u32 {
        let constraints: Vec<Constraint> = (0..40)
            .map(|_| {
                let key = format!("f{}", rng.gen_range(0..60));
                if rng.gen_bool(0.5) {
                    Constraint::new(key, Operator::Ge, rng.gen_range(0.0..100.0))
                } else {
                    Constraint::new(key, Operator::Le, rng.gen_range(0.0..100.0))
                }
            })
            .collect();
        store
            .register(Subscription {
                auth_hash: auth(i),
                sub_id: sub_id(i),
                constraints: constraints.clone(),
            })
            .unwrap();
        all.push((i, constraints));
    }
    assert_eq!(store.subscription_count(), 256);

    for round in 0..50 {
        let mut doc = serde_json::Map::new();
        for f in 0..60 {
            doc.insert(format!("f{f}"), json!(rng.gen_range(0.0..100.0)));
        }
        let attrs = flatten(&serde_json::Value::Object(doc)).unwrap();
        let mut expected: Vec<(AuthHash, SubId)> = all
            .iter()
            .filter(|(_, cs)| match_subscription(cs, &attrs))
            .map(|(i, _)| (auth(*i), sub_id(*i)))
            .collect();
        let mut got = store.match_all(&attrs);
        expected.sort();
        got.sort();
        assert_eq!(got, expected, "round {round}");
    }
}

#[test]
fn policy_install_replace_remove_respects_ownership() {
    let store = SubscriptionStore::new();
    let id = PolicyId::parse(&"a".repeat(32)).unwrap();
    let policy = SubscriptionPolicy {
        policy_id: id.clone(),
        owner: auth(1),
        pub_constraints: vec![Constraint::new("k", Operator::Eq, 1.0)],
        group: "A".into(),
    };
    store.install_policy(policy.clone());
    assert_eq!(store.policy_count(), 1);

    // Reinstall under the same id replaces.
    let mut updated = policy.clone();
    updated.group = "B".into();
    store.install_policy(updated);
    assert_eq!(store.policy_count(), 1);
    assert_eq!(store.policies()[0].group, "B");

    // A different identity cannot remove it.
    assert!(!store.remove_policy(&auth(2), &id));
    assert_eq!(store.policy_count(), 1);
    assert!(store.remove_policy(&auth(1), &id));
    assert_eq!(store.policy_count(), 0);
}

#[test]
fn concurrent_churn_never_tears_a_matching_pass() {
    // Writers churn register/remove on a hot key while readers run matching
    // passes. Every pass must see each subscription at most once (mutation
    // during iteration would be visible as duplicates or a crash) and the
    // generation must only move forward.
    let store = Arc::new(SubscriptionStore::new());
    let attrs = flatten(&json!({"x": 1})).unwrap();
    store
        .register(Subscription {
            auth_hash: auth(9999),
            sub_id: sub_id(9999),
            constraints: vec![],
        })
        .unwrap();

    let writers: Vec<_> = (0..2)
        .map(|w| {
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                for i in 0..400u32 {
                    let sub = Subscription {
                        auth_hash: auth(w),
                        sub_id: sub_id(1000 + w),
                        constraints: vec![],
                    };
                    store.register(sub).unwrap();
                    if i % 2 == 0 {
                        store.remove(&auth(w), &sub_id(1000 + w));
                    }
                }
            })
        })
        .collect();

    let mut last_generation = 0;
    for _ in 0..2000 {
        let view = store.matching_view(&attrs);
        let mut seen = view.pairs.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), view.pairs.len(), "a pass yielded a duplicate pair");
        assert!(view.pairs.iter().any(|(_, s)| *s == sub_id(9999)));
        assert!(view.generation >= last_generation);
        last_generation = view.generation;
    }
    for w in writers {
        w.join().unwrap();
    }
}

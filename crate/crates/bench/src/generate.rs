//! Seeded workload generation with empirical selectivity calibration.
//!
//! Subscriptions are range predicates: each constraint tests one attribute
//! against a threshold placed so a uniformly drawn publication value passes
//! with a chosen probability `p`. With constraints on distinct attributes and
//! publications carrying every attribute independently, a subscription with
//! `c` constraints matches a random publication with probability `≈ p^c` — so
//! `p = target^(1/c)` lands near the requested selectivity, and an empirical
//! sampling loop corrects the residual (threshold jitter, discretization)
//! until the measured value is within ±20% relative of the target.

use crate::profile::{ProfileError, WorkloadProfile};
use crate::workload::{splitmix64, GeneratedPolicy, GeneratedSub, PublicationSpec, Workload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sieve_core::{flatten, match_subscription, AuthHash, Constraint, Operator};
use std::collections::BTreeMap;
use thiserror::Error;

/// Why a workload could not be generated.
#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(
        "selectivity target {target} is unreachable for this universe: \
         closest achieved {achieved} (±20% relative required)"
    )]
    InfeasibleSelectivity { target: f64, achieved: f64 },
}

/// Relative tolerance of the calibrated selectivity.
pub const SELECTIVITY_TOLERANCE: f64 = 0.20;

fn relative_error(target: f64, achieved: f64) -> f64 {
    (achieved - target).abs() / target
}

fn achieved_close_enough(target: f64, achieved: f64) -> bool {
    relative_error(target, achieved) <= SELECTIVITY_TOLERANCE
}

const CALIBRATION_ROUNDS: u32 = 8;
const CALIBRATION_SAMPLE_PUBS: u64 = 400;

// Stream salts: each generated concern draws from its own RNG stream.
const SALT_SUBS: u64 = 0x5342;
const SALT_IDS: u64 = 0x4944;
const SALT_GROUPS: u64 = 0x4752;
const SALT_POLICIES: u64 = 0x504f;
const SALT_PUBS: u64 = 0x5055;
const SALT_CALIBRATION: u64 = 0x4341;

fn stream(seed: u64, salt: u64, round: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(salt ^ round)))
}

/// Generates the full workload for a profile. Deterministic: the same
/// profile (seed included) always returns the same value.
pub fn gen_workload(profile: &WorkloadProfile) -> Result<Workload, GenerateError> {
    profile.validate()?;

    let subscriptions = calibrated_subscriptions(profile)?;

    let mut id_rng = stream(profile.seed, SALT_IDS, 0);
    let subscriptions: Vec<GeneratedSub> = subscriptions
        .into_iter()
        .map(|constraints| GeneratedSub {
            auth_hash: random_hash(&mut id_rng),
            constraints,
        })
        .collect();
    let publisher = random_hash(&mut id_rng);

    let mut groups: BTreeMap<AuthHash, Vec<String>> = BTreeMap::new();
    let spec = &profile.subscriber_groups;
    if !spec.names.is_empty() && spec.member_fraction > 0.0 {
        let mut rng = stream(profile.seed, SALT_GROUPS, 0);
        for sub in &subscriptions {
            if rng.gen_bool(spec.member_fraction) {
                let name = spec.names[rng.gen_range(0..spec.names.len())].clone();
                groups.insert(sub.auth_hash.clone(), vec![name]);
            }
        }
    }

    let mut policy_rng = stream(profile.seed, SALT_POLICIES, 0);
    let policies = (0..profile.num_policies)
        .map(|_| random_policy(profile, &mut policy_rng))
        .collect();

    Ok(Workload {
        subscriptions,
        policies,
        groups,
        publisher,
        publications: PublicationSpec {
            seed: splitmix64(profile.seed ^ SALT_PUBS),
            count: (profile.publication_rate * profile.duration_secs).ceil() as u64,
            rate: profile.publication_rate,
        },
        profile: profile.clone(),
    })
}

/// Generates constraint sets and adjusts the per-constraint pass probability
/// until sampled selectivity is inside the tolerance band.
fn calibrated_subscriptions(
    profile: &WorkloadProfile,
) -> Result<Vec<Vec<Constraint>>, GenerateError> {
    let target = profile.match_selectivity_target;
    let c = profile.constraints_per_subscription;
    let mut p = if c == 0 { 1.0 } else { target.powf(1.0 / c as f64) };
    let mut best: Option<(f64, Vec<Vec<Constraint>>)> = None;

    for round in 0..CALIBRATION_ROUNDS {
        let subs = subscriptions_with_pass_probability(profile, p, u64::from(round));
        let achieved = sampled_selectivity(profile, &subs);
        if achieved_close_enough(target, achieved) {
            return Ok(subs);
        }
        let closer = best
            .as_ref()
            .map_or(true, |(prev, _)| relative_error(target, achieved) < relative_error(target, *prev));
        if closer {
            best = Some((achieved, subs));
        }
        if c == 0 {
            // No knob to turn: zero-constraint subscriptions match everything.
            break;
        }
        // Correct multiplicatively in per-constraint space.
        let ratio = if achieved > 0.0 {
            (target / achieved).powf(1.0 / c as f64)
        } else {
            1.5
        };
        p = (p * ratio).clamp(1e-6, 1.0);
    }

    let (achieved, _) = best.expect("at least one round ran");
    Err(GenerateError::InfeasibleSelectivity { target, achieved })
}

/// One generation round: every subscription gets `c` constraints on distinct
/// attributes, each passing a uniform value with probability ≈ `p` (±15%
/// jitter so constraint sets stay diverse).
fn subscriptions_with_pass_probability(
    profile: &WorkloadProfile,
    p: f64,
    round: u64,
) -> Vec<Vec<Constraint>> {
    let mut rng = stream(profile.seed, SALT_SUBS, round);
    let universe = &profile.attribute_universe;
    (0..profile.num_subscriptions)
        .map(|_| {
            sample_distinct(universe.len(), profile.constraints_per_subscription, &mut rng)
                .into_iter()
                .map(|attr_index| {
                    let attr = &universe[attr_index];
                    let pass = (p * rng.gen_range(0.85..1.15)).clamp(1e-6, 1.0);
                    // Pass from below (v ≤ t) or from above (v ≥ t); the
                    // strict variants are measure-identical for continuous
                    // draws and add operator variety.
                    if rng.gen_bool(0.5) {
                        let threshold = attr.min + pass * attr.width();
                        let op = if rng.gen_bool(0.5) { Operator::Le } else { Operator::Lt };
                        Constraint::new(attr.key.clone(), op, threshold)
                    } else {
                        let threshold = attr.max - pass * attr.width();
                        let op = if rng.gen_bool(0.5) { Operator::Ge } else { Operator::Gt };
                        Constraint::new(attr.key.clone(), op, threshold)
                    }
                })
                .collect()
        })
        .collect()
}

/// Measures selectivity by matching sampled publications against every
/// subscription with the production matching semantics.
fn sampled_selectivity(profile: &WorkloadProfile, subs: &[Vec<Constraint>]) -> f64 {
    if subs.is_empty() {
        return 0.0;
    }
    let sample_seed = splitmix64(profile.seed ^ SALT_CALIBRATION);
    let mut matched: u64 = 0;
    for index in 0..CALIBRATION_SAMPLE_PUBS {
        let body = crate::workload::publication_body(&profile.attribute_universe, sample_seed, index);
        let doc: serde_json::Value = serde_json::from_str(&body).expect("generated body is JSON");
        let attrs = flatten(&doc).expect("generated body flattens");
        matched += subs
            .iter()
            .filter(|constraints| match_subscription(constraints, &attrs))
            .count() as u64;
    }
    matched as f64 / (CALIBRATION_SAMPLE_PUBS * subs.len() as u64) as f64
}

/// A policy with 0–2 broad constraints and a group drawn from the profile's
/// names plus the wildcard.
fn random_policy(profile: &WorkloadProfile, rng: &mut ChaCha8Rng) -> GeneratedPolicy {
    let universe = &profile.attribute_universe;
    let count = rng.gen_range(0..=2.min(universe.len()));
    let pub_constraints = sample_distinct(universe.len(), count, rng)
        .into_iter()
        .map(|attr_index| {
            let attr = &universe[attr_index];
            // Broad: half the range passes, so policies restrict a visible
            // but not overwhelming share of publications.
            let threshold = attr.min + rng.gen_range(0.3..0.7) * attr.width();
            let op = if rng.gen_bool(0.5) { Operator::Le } else { Operator::Ge };
            Constraint::new(attr.key.clone(), op, threshold)
        })
        .collect();
    let names = &profile.subscriber_groups.names;
    let pick = rng.gen_range(0..=names.len());
    let group = names
        .get(pick)
        .cloned()
        .unwrap_or_else(|| sieve_core::WILDCARD_GROUP.to_string());
    GeneratedPolicy {
        pub_constraints,
        group,
    }
}

/// `k` distinct indices out of `0..n` (partial Fisher–Yates).
fn sample_distinct(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

fn random_hash(rng: &mut ChaCha8Rng) -> AuthHash {
    let mut bytes = [0u8; 32];
    rng.fill(&mut bytes);
    AuthHash::parse(&hex::encode(bytes)).expect("hex of 32 bytes is a valid hash")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::GroupsSpec;

    #[test]
    fn generation_is_deterministic_to_the_byte() {
        let mut profile = WorkloadProfile::uniform(64, 5, 12345);
        profile.num_policies = 4;
        profile.subscriber_groups = GroupsSpec {
            names: vec!["a".into(), "b".into()],
            member_fraction: 0.5,
        };
        let once = serde_json::to_vec(&gen_workload(&profile).unwrap()).unwrap();
        let twice = serde_json::to_vec(&gen_workload(&profile).unwrap()).unwrap();
        assert_eq!(once, twice);

        profile.seed = 12346;
        let other = serde_json::to_vec(&gen_workload(&profile).unwrap()).unwrap();
        assert_ne!(once, other);
    }

    #[test]
    fn requested_shape_is_honored() {
        let mut profile = WorkloadProfile::uniform(256, 40, 7);
        profile.attribute_universe = (0..48)
            .map(|i| crate::profile::AttributeSpec::new(format!("attr{i:02}"), 0.0, 1000.0))
            .collect();
        let workload = gen_workload(&profile).unwrap();
        assert_eq!(workload.subscriptions.len(), 256);
        for sub in &workload.subscriptions {
            assert_eq!(sub.constraints.len(), 40);
            let mut keys: Vec<&str> = sub.constraints.iter().map(|c| c.key.as_str()).collect();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), 40, "constraints use distinct attributes");
        }
        // Identities are distinct.
        let mut hashes: Vec<&str> = workload
            .subscriptions
            .iter()
            .map(|s| s.auth_hash.as_str())
            .collect();
        hashes.sort_unstable();
        hashes.dedup();
        assert_eq!(hashes.len(), 256);
    }

    #[test]
    fn calibration_lands_within_the_tolerance_band() {
        for (subs, c, target) in [(64, 5, 0.05), (32, 3, 0.3), (128, 10, 0.01)] {
            let mut profile = WorkloadProfile::uniform(subs, c, 99);
            profile.match_selectivity_target = target;
            let workload = gen_workload(&profile).unwrap();
            let achieved = sampled_selectivity(
                &profile,
                &workload
                    .subscriptions
                    .iter()
                    .map(|s| s.constraints.clone())
                    .collect::<Vec<_>>(),
            );
            let rel = (achieved - target).abs() / target;
            assert!(
                rel <= SELECTIVITY_TOLERANCE,
                "target {target}: achieved {achieved} (relative error {rel:.3})"
            );
        }
    }

    #[test]
    fn full_selectivity_with_empty_subscriptions_matches_everything() {
        let mut profile = WorkloadProfile::uniform(8, 0, 5);
        profile.match_selectivity_target = 1.0;
        let workload = gen_workload(&profile).unwrap();
        assert!(workload.subscriptions.iter().all(|s| s.constraints.is_empty()));
    }

    #[test]
    fn unreachable_targets_are_reported_not_fudged() {
        // Zero constraints per subscription always match: selectivity is
        // pinned at 1.0, so 0.5 cannot be approached.
        let mut profile = WorkloadProfile::uniform(8, 0, 5);
        profile.match_selectivity_target = 0.5;
        assert!(matches!(
            gen_workload(&profile),
            Err(GenerateError::InfeasibleSelectivity { .. })
        ));
    }

    #[test]
    fn policies_draw_groups_from_the_profile_and_the_wildcard() {
        let mut profile = WorkloadProfile::uniform(4, 2, 31);
        profile.num_policies = 40;
        profile.subscriber_groups = GroupsSpec {
            names: vec!["red".into(), "green".into()],
            member_fraction: 0.5,
        };
        let workload = gen_workload(&profile).unwrap();
        assert_eq!(workload.policies.len(), 40);
        let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
        for policy in &workload.policies {
            assert!(policy.pub_constraints.len() <= 2);
            seen.insert(policy.group.as_str());
        }
        assert!(seen.contains("*"), "wildcard policies appear");
        assert!(seen.contains("red") || seen.contains("green"));
    }
}

//! Workload profiles: the knobs a benchmark run is generated from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One attribute of the publication universe: a key and the numeric range
/// its values are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub key: String,
    pub min: f64,
    pub max: f64,
}

impl AttributeSpec {
    pub fn new(key: impl Into<String>, min: f64, max: f64) -> Self {
        AttributeSpec {
            key: key.into(),
            min,
            max,
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// How subscribers are spread over named groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupsSpec {
    /// Distinct group names; must not contain the wildcard.
    pub names: Vec<String>,
    /// Fraction of subscribers placed into exactly one (random) group; the
    /// rest stay anonymous.
    #[serde(default)]
    pub member_fraction: f64,
}

/// Everything a deterministic workload is generated from.
///
/// The same profile and seed always generate the byte-identical workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub num_subscriptions: usize,
    /// Constraints per subscription, each on a distinct attribute.
    pub constraints_per_subscription: usize,
    pub attribute_universe: Vec<AttributeSpec>,
    /// Target probability that a random publication matches a random
    /// subscription; calibrated empirically to ±20% relative.
    pub match_selectivity_target: f64,
    pub num_policies: usize,
    #[serde(default)]
    pub subscriber_groups: GroupsSpec,
    /// Publications per second (default offered rate of a run).
    pub publication_rate: f64,
    /// Default measurement window of a run, seconds.
    pub duration_secs: f64,
    pub seed: u64,
}

/// Why a profile cannot be used.
#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("the attribute universe is empty")]
    EmptyUniverse,
    #[error("attribute {key:?} needs min < max (both finite), got {min}..{max}")]
    BadRange { key: String, min: f64, max: f64 },
    #[error("attribute key {0:?} appears twice in the universe")]
    DuplicateKey(String),
    #[error("attribute keys must be non-empty")]
    EmptyKey,
    #[error(
        "{constraints} constraints per subscription need at least that many \
         attributes, universe has {universe}"
    )]
    TooFewAttributes { constraints: usize, universe: usize },
    #[error("match_selectivity_target must be in (0, 1], got {0}")]
    BadSelectivity(f64),
    #[error("publication_rate must be positive, got {0}")]
    BadRate(f64),
    #[error("duration_secs must be positive, got {0}")]
    BadDuration(f64),
    #[error("group name {0:?} is reserved or duplicated")]
    BadGroupName(String),
    #[error("member_fraction must be in [0, 1], got {0}")]
    BadMemberFraction(f64),
}

impl WorkloadProfile {
    /// A ready-to-run profile over a synthetic numeric universe: no policies,
    /// no groups, 5% selectivity, 100 pubs/s for 10 s.
    ///
    /// The universe holds `max(8, 6/5 × constraints)` attributes `attr00,
    /// attr01, …` with values in `[0, 1000)`.
    pub fn uniform(num_subscriptions: usize, constraints_per_subscription: usize, seed: u64) -> Self {
        let universe_size = (constraints_per_subscription * 6 / 5).max(8);
        WorkloadProfile {
            num_subscriptions,
            constraints_per_subscription,
            attribute_universe: (0..universe_size)
                .map(|i| AttributeSpec::new(format!("attr{i:02}"), 0.0, 1000.0))
                .collect(),
            match_selectivity_target: 0.05,
            num_policies: 0,
            subscriber_groups: GroupsSpec::default(),
            publication_rate: 100.0,
            duration_secs: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.attribute_universe.is_empty() {
            return Err(ProfileError::EmptyUniverse);
        }
        let mut seen = std::collections::HashSet::new();
        for attr in &self.attribute_universe {
            if attr.key.is_empty() {
                return Err(ProfileError::EmptyKey);
            }
            if !seen.insert(attr.key.as_str()) {
                return Err(ProfileError::DuplicateKey(attr.key.clone()));
            }
            if !(attr.min.is_finite() && attr.max.is_finite() && attr.min < attr.max) {
                return Err(ProfileError::BadRange {
                    key: attr.key.clone(),
                    min: attr.min,
                    max: attr.max,
                });
            }
        }
        if self.constraints_per_subscription > self.attribute_universe.len() {
            return Err(ProfileError::TooFewAttributes {
                constraints: self.constraints_per_subscription,
                universe: self.attribute_universe.len(),
            });
        }
        if !(self.match_selectivity_target > 0.0 && self.match_selectivity_target <= 1.0) {
            return Err(ProfileError::BadSelectivity(self.match_selectivity_target));
        }
        if !(self.publication_rate > 0.0 && self.publication_rate.is_finite()) {
            return Err(ProfileError::BadRate(self.publication_rate));
        }
        if !(self.duration_secs > 0.0 && self.duration_secs.is_finite()) {
            return Err(ProfileError::BadDuration(self.duration_secs));
        }
        let mut group_seen = std::collections::HashSet::new();
        for name in &self.subscriber_groups.names {
            if name.is_empty() || name == sieve_core::WILDCARD_GROUP || !group_seen.insert(name) {
                return Err(ProfileError::BadGroupName(name.clone()));
            }
        }
        let frac = self.subscriber_groups.member_fraction;
        if !(0.0..=1.0).contains(&frac) {
            return Err(ProfileError::BadMemberFraction(frac));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_uniform_profile_is_valid() {
        assert_eq!(WorkloadProfile::uniform(256, 40, 7).validate(), Ok(()));
        assert_eq!(WorkloadProfile::uniform(1, 0, 7).validate(), Ok(()));
    }

    #[test]
    fn validation_names_the_offending_knob() {
        let base = WorkloadProfile::uniform(4, 2, 1);

        let mut p = base.clone();
        p.attribute_universe.clear();
        assert_eq!(p.validate(), Err(ProfileError::EmptyUniverse));

        let mut p = base.clone();
        p.attribute_universe[0].max = p.attribute_universe[0].min;
        assert!(matches!(p.validate(), Err(ProfileError::BadRange { .. })));

        let mut p = base.clone();
        p.attribute_universe[1].key = p.attribute_universe[0].key.clone();
        assert!(matches!(p.validate(), Err(ProfileError::DuplicateKey(_))));

        let mut p = base.clone();
        p.constraints_per_subscription = p.attribute_universe.len() + 1;
        assert!(matches!(
            p.validate(),
            Err(ProfileError::TooFewAttributes { .. })
        ));

        let mut p = base.clone();
        p.match_selectivity_target = 0.0;
        assert_eq!(p.validate(), Err(ProfileError::BadSelectivity(0.0)));
        p.match_selectivity_target = 1.5;
        assert_eq!(p.validate(), Err(ProfileError::BadSelectivity(1.5)));

        let mut p = base.clone();
        p.subscriber_groups.names = vec!["*".into()];
        assert!(matches!(p.validate(), Err(ProfileError::BadGroupName(_))));

        let mut p = base;
        p.subscriber_groups.member_fraction = 1.2;
        assert_eq!(p.validate(), Err(ProfileError::BadMemberFraction(1.2)));
    }

    #[test]
    fn profiles_round_trip_through_json() {
        let p = WorkloadProfile::uniform(64, 5, 42);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<WorkloadProfile>(&text).unwrap(), p);
    }
}

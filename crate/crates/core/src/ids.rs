//! Identifiers for publications, subscriptions and policies.
//!
//! All three are 128-bit random values written as 32 lowercase hex characters.
//! They are distinct types so a publication id cannot be passed where a
//! subscription id belongs.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Error for strings that are not a valid 32-char hex id.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0} must be exactly 32 lowercase hex characters")]
pub struct InvalidId(&'static str);

macro_rules! hex32_id {
    ($(#[$doc:meta])* $name:ident, $label:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String")]
        pub struct $name(String);

        impl $name {
            /// Validates and wraps an existing hex string.
            pub fn parse(s: &str) -> Result<Self, InvalidId> {
                if s.len() == 32 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                    Ok($name(s.to_owned()))
                } else {
                    Err(InvalidId($label))
                }
            }

            /// Mints a fresh random id.
            pub fn random() -> Self {
                $name(format!("{:032x}", rand::random::<u128>()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl TryFrom<String> for $name {
            type Error = InvalidId;

            fn try_from(s: String) -> Result<Self, Self::Error> {
                $name::parse(&s)
            }
        }
    };
}

hex32_id!(
    /// Identifier a publication carries through the whole cluster: assigned
    /// once at ingestion and identical on every matcher that receives the
    /// multicast copy.
    PubId,
    "pub_id"
);
hex32_id!(
    /// Identifier of a registered subscription.
    SubId,
    "sub_id"
);
hex32_id!(
    /// Identifier of an installed permission policy.
    PolicyId,
    "policy_id"
);

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn random_ids_parse_back_and_do_not_collide_in_practice() {
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let id = PubId::random();
            assert_eq!(PubId::parse(id.as_str()).unwrap(), id);
            assert!(seen.insert(id.as_str().to_owned()), "duplicate random id");
        }
    }

    #[test]
    fn parse_rejects_wrong_length_and_alphabet() {
        assert!(SubId::parse(&"0".repeat(32)).is_ok());
        assert!(SubId::parse(&"0".repeat(31)).is_err());
        assert!(SubId::parse(&"0".repeat(33)).is_err());
        assert!(SubId::parse(&"G".repeat(32)).is_err());
        assert!(SubId::parse(&"A".repeat(32)).is_err());
    }

    #[test]
    fn ids_serialize_as_plain_strings() {
        let id = PolicyId::parse(&"5".repeat(32)).unwrap();
        assert_eq!(
            serde_json::to_string(&id).unwrap(),
            format!("\"{}\"", "5".repeat(32))
        );
        assert!(serde_json::from_str::<PolicyId>("\"nope\"").is_err());
    }
}

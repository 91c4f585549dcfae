//! Client identities.
//!
//! A client is identified by the SHA-256 digest of its DER-encoded X.509
//! certificate, written as 64 lowercase hex characters. Services derive the
//! hash from the peer certificate in mutual-TLS deployments; the plaintext
//! test mode carries the same string in an `X-Auth-Hash` header instead. The
//! two modes are configured per process and never mixed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

/// Error for strings that are not a valid auth hash.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("auth hash must be exactly 64 lowercase hex characters")]
pub struct InvalidAuthHash;

/// A client identity: SHA-256 of the DER client certificate, lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub struct AuthHash(String);

impl AuthHash {
    /// Validates and wraps an existing hex string.
    pub fn parse(s: &str) -> Result<Self, InvalidAuthHash> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(AuthHash(s.to_owned()))
        } else {
            Err(InvalidAuthHash)
        }
    }

    /// Derives the identity of a client certificate given in DER form.
    pub fn from_cert_der(der: &[u8]) -> Self {
        AuthHash(hex::encode(Sha256::digest(der)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AuthHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for AuthHash {
    type Error = InvalidAuthHash;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        AuthHash::parse(&s)
    }
}

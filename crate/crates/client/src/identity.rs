//! Who this client is, and how the cluster will see it.

use crate::ClientError;
use sieve_core::AuthHash;
use std::path::{Path, PathBuf};

/// The client's identity.
///
/// Services identify callers by an authentication hash. Where TLS client
/// certificates are in play the server derives that hash itself (SHA-256
/// over the certificate's DER form, lowercase hex); this type applies the
/// same derivation locally so the client knows its own name. Plaintext
/// deployments take the hash at face value from a header instead.
#[derive(Debug, Clone)]
pub enum ClientIdentity {
    /// An explicit hash, asserted via the `X-Auth-Hash` header.
    Hash(AuthHash),
    /// A client certificate presented during the TLS handshake; the hash is
    /// derived from the certificate exactly as the server derives it.
    Certificate {
        cert_pem: PathBuf,
        key_pem: PathBuf,
        auth_hash: AuthHash,
    },
}

impl ClientIdentity {
    /// Identity from a bare hash (test and plaintext deployments).
    pub fn hash(auth_hash: AuthHash) -> Self {
        ClientIdentity::Hash(auth_hash)
    }

    /// Identity from PEM files: the certificate (first CERTIFICATE block)
    /// and its private key.
    pub fn from_cert_pem(
        cert_pem: impl Into<PathBuf>,
        key_pem: impl Into<PathBuf>,
    ) -> Result<Self, ClientError> {
        let cert_pem = cert_pem.into();
        let der = first_certificate_der(&cert_pem)?;
        Ok(ClientIdentity::Certificate {
            auth_hash: AuthHash::from_cert_der(&der),
            cert_pem,
            key_pem: key_pem.into(),
        })
    }

    /// The hash under which the cluster files everything this client does.
    pub fn auth_hash(&self) -> &AuthHash {
        match self {
            ClientIdentity::Hash(auth_hash) => auth_hash,
            ClientIdentity::Certificate { auth_hash, .. } => auth_hash,
        }
    }
}

fn first_certificate_der(path: &Path) -> Result<Vec<u8>, ClientError> {
    let file = std::fs::File::open(path)
        .map_err(|err| ClientError::Config(format!("reading {}: {err}", path.display())))?;
    let mut reader = std::io::BufReader::new(file);
    let first = rustls_pemfile::certs(&mut reader).next();
    first
        .ok_or_else(|| ClientError::Config(format!("{} holds no certificate", path.display())))?
        .map(|cert| cert.to_vec())
        .map_err(|err| ClientError::Config(format!("parsing {}: {err}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derives_the_same_hash_the_server_will() {
        let dir = tempfile::tempdir().unwrap();
        let ca = sieve_net::testcerts::TestCa::new(dir.path());
        let issued = ca.issue_client("alice");

        let identity = ClientIdentity::from_cert_pem(&issued.cert_pem, &issued.key_pem).unwrap();
        assert_eq!(identity.auth_hash(), &issued.auth_hash);
    }

    #[test]
    fn refuses_a_file_without_certificates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pem");
        std::fs::write(&path, "no pem here").unwrap();
        assert!(ClientIdentity::from_cert_pem(&path, &path).is_err());
    }
}

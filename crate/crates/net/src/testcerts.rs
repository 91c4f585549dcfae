//! Self-signed certificate authority for integration tests.
//!
//! Issues a throwaway CA plus server and client identities, written to a
//! temporary directory so service configs can point at real files.

use sieve_core::AuthHash;
use std::path::{Path, PathBuf};

/// A freshly generated identity: PEM files on disk plus the DER bytes and the
/// auth hash the cluster will derive for it.
pub struct TestIdentity {
    pub cert_pem: PathBuf,
    pub key_pem: PathBuf,
    pub cert_der: Vec<u8>,
    pub auth_hash: AuthHash,
}

/// Test certificate authority rooted in a temporary directory.
pub struct TestCa {
    dir: PathBuf,
    ca_cert: rcgen::Certificate,
    ca_key: rcgen::KeyPair,
    ca_pem_path: PathBuf,
    serial: std::cell::Cell<u32>,
}

impl TestCa {
    /// Creates a CA under `dir` (must exist; files are written into it).
    pub fn new(dir: &Path) -> Self {
        let ca_key = rcgen::KeyPair::generate().expect("generate CA key");
        let mut params = rcgen::CertificateParams::new(Vec::new()).expect("CA params");
        params.is_ca = rcgen::IsCa::Ca(rcgen::BasicConstraints::Unconstrained);
        params
            .distinguished_name
            .push(rcgen::DnType::CommonName, "sieve test ca");
        let ca_cert = params.self_signed(&ca_key).expect("self-sign CA");

        let ca_pem_path = dir.join("ca.pem");
        std::fs::write(&ca_pem_path, ca_cert.pem()).expect("write CA pem");
        TestCa {
            dir: dir.to_owned(),
            ca_cert,
            ca_key,
            ca_pem_path,
            serial: std::cell::Cell::new(0),
        }
    }

    /// Path of the CA certificate bundle (for root stores and client CAs).
    pub fn ca_pem(&self) -> &Path {
        &self.ca_pem_path
    }

    fn issue(&self, name: &str, server: bool) -> TestIdentity {
        let n = self.serial.get();
        self.serial.set(n + 1);

        let key = rcgen::KeyPair::generate().expect("generate key");
        let mut params = if server {
            // Serve on loopback under either name.
            rcgen::CertificateParams::new(vec!["localhost".to_string(), "127.0.0.1".to_string()])
                .expect("params")
        } else {
            rcgen::CertificateParams::new(Vec::new()).expect("params")
        };
        params
            .distinguished_name
            .push(rcgen::DnType::CommonName, name);
        let cert = params
            .signed_by(&key, &self.ca_cert, &self.ca_key)
            .expect("sign leaf");

        let cert_pem = self.dir.join(format!("{name}-{n}.pem"));
        let key_pem = self.dir.join(format!("{name}-{n}.key"));
        std::fs::write(&cert_pem, cert.pem()).expect("write cert");
        std::fs::write(&key_pem, key.serialize_pem()).expect("write key");

        let cert_der = cert.der().to_vec();
        let auth_hash = AuthHash::from_cert_der(&cert_der);
        TestIdentity {
            cert_pem,
            key_pem,
            cert_der,
            auth_hash,
        }
    }

    /// Issues a server identity valid for localhost/127.0.0.1.
    pub fn issue_server(&self, name: &str) -> TestIdentity {
        self.issue(name, true)
    }

    /// Issues a client identity; its `auth_hash` is what services will derive.
    pub fn issue_client(&self, name: &str) -> TestIdentity {
        self.issue(name, false)
    }
}

//! SDK tests against a real in-process cluster (load balancer + matchers).

use serde_json::json;
use sieve_client::{Client, ClientError, ClientIdentity, ReconnectPolicy};
use sieve_core::constraint::{Constraint, Operator};
use sieve_core::value::AttributeValue;
use sieve_core::AuthHash;
use sieve_frontend::FrontendConfig;
use sieve_matcher::{MatcherConfig, RunningMatcher};
use std::collections::HashSet;
use std::time::Duration;

fn auth(n: u8) -> AuthHash {
    AuthHash::parse(&format!("{n:02x}").repeat(32)).unwrap()
}

struct Cluster {
    matchers: Vec<RunningMatcher>,
    lb: sieve_frontend::RunningFrontend,
}

impl Cluster {
    async fn start(n: usize) -> Cluster {
        let mut matchers = Vec::new();
        for id in 0..n {
            matchers.push(
                sieve_matcher::spawn(MatcherConfig::local(id))
                    .await
                    .expect("matcher starts"),
            );
        }
        let addresses: Vec<String> = matchers.iter().map(|m| m.url()).collect();
        let lb = sieve_frontend::spawn(FrontendConfig::local(addresses))
            .await
            .expect("balancer starts");
        Cluster { matchers, lb }
    }

    fn client(&self, n: u8) -> Client {
        Client::new(self.lb.url(), ClientIdentity::hash(auth(n))).unwrap()
    }

    async fn shutdown(self) {
        self.lb.shutdown();
        for m in self.matchers {
            m.shutdown().await;
        }
    }
}

/// Asserts nothing arrives on the handle for a little while.
async fn assert_silent(handle: &mut sieve_client::SubscriptionHandle) {
    match tokio::time::timeout(Duration::from_millis(400), handle.recv()).await {
        Err(_elapsed) => {}
        Ok(item) => panic!("expected silence, got {item:?}"),
    }
}

async fn recv(handle: &mut sieve_client::SubscriptionHandle) -> sieve_core::wire::DeliveryEnvelope {
    tokio::time::timeout(Duration::from_secs(5), handle.recv())
        .await
        .expect("timed out waiting for a delivery")
        .expect("stream error")
}

#[tokio::test]
async fn subscribe_publish_receive_roundtrip() {
    let cluster = Cluster::start(2).await;
    let client = cluster.client(0xa1);

    let mut handle = client
        .subscribe(vec![
            Constraint::new("lat", Operator::Gt, 50.0),
            Constraint::new("lat", Operator::Lt, 60.0),
        ])
        .await
        .unwrap();
    assert!(handle.matcher_id() < 2);

    // The published bytes reach the subscriber exactly, spacing included.
    let body = r#"{"id": "truck-17",  "lat": 51.05,"lon":13.73}"#;
    let ack = client.publish_raw(body.as_bytes().to_vec()).await.unwrap();
    let envelope = recv(&mut handle).await;
    assert_eq!(envelope.sub_id, *handle.sub_id());
    assert_eq!(envelope.pub_id, ack.pub_id);
    assert_eq!(envelope.publication.get(), body);
    assert!(envelope.send_ts_ms.is_some(), "the SDK stamps send time");

    // Non-matching publications stay silent.
    client.publish(&json!({ "lat": 49.0 })).await.unwrap();
    assert_silent(&mut handle).await;

    // Closing removes the registration; a second close-by-id finds nothing.
    let sub_id = handle.sub_id().clone();
    assert!(handle.close().await.unwrap());
    assert!(!client.unsubscribe(&sub_id).await.unwrap());

    cluster.shutdown().await;
}

#[tokio::test]
async fn a_thousand_publishes_mint_distinct_ids() {
    let cluster = Cluster::start(1).await;
    let client = cluster.client(0xa1);

    let mut seen = HashSet::new();
    for i in 0..1000u32 {
        let ack = client.publish(&json!({ "n": i })).await.unwrap();
        assert!(
            seen.insert(ack.pub_id.to_string()),
            "duplicate pub_id at publish {i}"
        );
    }
    assert_eq!(seen.len(), 1000);

    cluster.shutdown().await;
}

#[tokio::test]
async fn errors_are_typed() {
    let cluster = Cluster::start(2).await;
    let client = cluster.client(0xa1);

    // Publications must be JSON objects.
    let err = client.publish(&json!([1, 2, 3])).await.unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)), "{err}");
    let err = client.publish_raw(b"not json".to_vec()).await.unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)), "{err}");

    // Ordered comparisons only exist for numbers.
    let err = client
        .subscribe(vec![Constraint::new(
            "k",
            Operator::Gt,
            AttributeValue::Null,
        )])
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)), "{err}");

    // Attaching an unknown subscription is refused.
    let err = client
        .attach(sieve_core::SubId::parse(&"7".repeat(32)).unwrap(), 0)
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)), "{err}");

    // Attaching someone else's subscription is an identity problem.
    let handle = client.subscribe(vec![]).await.unwrap();
    let intruder = cluster.client(0xb0);
    let err = intruder
        .attach(handle.sub_id().clone(), handle.matcher_id())
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Unauthenticated(_)), "{err}");

    // A cluster address nobody listens on is a transport problem.
    let unreachable = Client::new(
        "http://127.0.0.1:9",
        ClientIdentity::hash(auth(0xa1)),
    )
    .unwrap();
    let err = unreachable.publish(&json!({})).await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)), "{err}");

    cluster.shutdown().await;
}

#[tokio::test]
async fn partial_and_unavailable_surface_the_cluster_state() {
    let mut cluster = Cluster::start(2).await;
    let client = cluster.client(0xa1);

    // Kill matcher 1; the survivors still take publications.
    cluster.matchers.remove(1).shutdown().await;

    let err = client.publish(&json!({ "x": 1 })).await.unwrap_err();
    match &err {
        ClientError::PartialDelivery { multicast, .. } => {
            assert_eq!(multicast.len(), 2);
            assert!(multicast[0].status.is_ok());
            assert!(!multicast[1].status.is_ok());
        }
        other => panic!("expected PartialDelivery, got {other}"),
    }

    // A subscription whose partition is down cannot be placed. Search for
    // constraints routing to partition 1 the same way the balancer routes.
    let to_dead = (0..10_000u32)
        .map(|seed| vec![Constraint::new("k", Operator::Le, f64::from(seed))])
        .find(|list| sieve_core::partition::partition_of(list, 2) == 1)
        .unwrap();
    let err = client.subscribe(to_dead).await.unwrap_err();
    assert!(matches!(err, ClientError::Unavailable(_)), "{err}");

    cluster.shutdown().await;
}

#[tokio::test]
async fn displacement_is_terminal() {
    let cluster = Cluster::start(1).await;
    let client = cluster.client(0xa1);

    let mut first = client.subscribe(vec![]).await.unwrap();
    let mut second = client
        .attach(first.sub_id().clone(), first.matcher_id())
        .await
        .unwrap();

    let err = tokio::time::timeout(Duration::from_secs(5), first.recv())
        .await
        .expect("timed out waiting for displacement")
        .unwrap_err();
    assert!(matches!(err, ClientError::Displaced), "{err}");
    // Terminal: the stream stays closed rather than reconnecting.
    let err = first.recv().await.unwrap_err();
    assert!(
        matches!(err, ClientError::Displaced | ClientError::StreamClosed(_)),
        "{err}"
    );

    // The newer attachment carries the traffic now.
    client.publish(&json!({ "x": 1 })).await.unwrap();
    let envelope = recv(&mut second).await;
    assert_eq!(envelope.sub_id, *second.sub_id());

    cluster.shutdown().await;
}

#[tokio::test]
async fn policies_gate_delivery_end_to_end() {
    let cluster = Cluster::start(2).await;
    let subscriber = cluster.client(0xa1);
    let publisher = cluster.client(0xcc);

    let mut handle = subscriber.subscribe(vec![]).await.unwrap();

    publisher.publish(&json!({ "seq": 1 })).await.unwrap();
    assert_eq!(recv(&mut handle).await.publication.get(), r#"{"seq":1}"#);

    // Restrict everything to a group the subscriber is not in.
    let ack = publisher.install_policy(vec![], "ops").await.unwrap();
    publisher.publish(&json!({ "seq": 2 })).await.unwrap();
    assert_silent(&mut handle).await;

    // Removing the policy restores delivery.
    assert!(publisher.remove_policy(&ack.policy_id).await.unwrap());
    publisher.publish(&json!({ "seq": 3 })).await.unwrap();
    assert_eq!(recv(&mut handle).await.publication.get(), r#"{"seq":3}"#);

    // The wildcard group admits everyone, including this ungrouped
    // subscriber.
    let ack = publisher.install_policy(vec![], "*").await.unwrap();
    publisher.publish(&json!({ "seq": 4 })).await.unwrap();
    assert_eq!(recv(&mut handle).await.publication.get(), r#"{"seq":4}"#);
    publisher.remove_policy(&ack.policy_id).await.unwrap();

    cluster.shutdown().await;
}

/// A TCP relay whose live connections can be severed on demand: the SDK
/// under test dials the balancer through it.
struct ChaosProxy {
    addr: std::net::SocketAddr,
    conns: std::sync::Arc<tokio::sync::Mutex<Vec<tokio::task::JoinHandle<()>>>>,
    accept: tokio::task::JoinHandle<()>,
}

impl ChaosProxy {
    async fn start(upstream: std::net::SocketAddr) -> ChaosProxy {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let conns = std::sync::Arc::new(tokio::sync::Mutex::new(Vec::new()));
        let accept = tokio::spawn({
            let conns = std::sync::Arc::clone(&conns);
            async move {
                while let Ok((mut down, _)) = listener.accept().await {
                    let task = tokio::spawn(async move {
                        let Ok(mut up) = tokio::net::TcpStream::connect(upstream).await else {
                            return;
                        };
                        let _ = tokio::io::copy_bidirectional(&mut down, &mut up).await;
                    });
                    conns.lock().await.push(task);
                }
            }
        });
        ChaosProxy {
            addr,
            conns,
            accept,
        }
    }

    /// Severs every live connection; new ones still connect.
    async fn sever(&self) {
        for task in self.conns.lock().await.drain(..) {
            task.abort();
        }
    }

    fn stop(self) {
        self.accept.abort();
    }
}

#[tokio::test]
async fn reconnects_after_the_network_drops() {
    let cluster = Cluster::start(1).await;
    let proxy = ChaosProxy::start(cluster.lb.addr).await;

    // The subscriber dials through the severable proxy; the publisher goes
    // direct so its calls cannot race the severed connections.
    let subscriber = Client::builder(
        format!("http://{}", proxy.addr),
        ClientIdentity::hash(auth(0xa1)),
    )
    .reconnect(ReconnectPolicy {
        base: Duration::from_millis(50),
        cap: Duration::from_millis(500),
        max_retries: None,
    })
    .build()
    .unwrap();
    let publisher = cluster.client(0xcc);

    let mut handle = subscriber.subscribe(vec![]).await.unwrap();
    publisher.publish(&json!({ "phase": "before" })).await.unwrap();
    assert_eq!(recv(&mut handle).await.publication.get(), r#"{"phase":"before"}"#);

    proxy.sever().await;
    // Give the stream time to notice the cut and re-attach through the
    // proxy (first retry after ~50 ms).
    tokio::time::sleep(Duration::from_millis(800)).await;

    publisher.publish(&json!({ "phase": "after" })).await.unwrap();
    let envelope = recv(&mut handle).await;
    assert_eq!(envelope.publication.get(), r#"{"phase":"after"}"#);

    proxy.stop();
    cluster.shutdown().await;
}

#[tokio::test]
async fn reattach_gives_up_when_the_subscription_is_gone() {
    let cluster = Cluster::start(1).await;
    let proxy = ChaosProxy::start(cluster.lb.addr).await;

    let subscriber = Client::builder(
        format!("http://{}", proxy.addr),
        ClientIdentity::hash(auth(0xa1)),
    )
    .reconnect(ReconnectPolicy {
        base: Duration::from_millis(50),
        cap: Duration::from_millis(200),
        max_retries: None,
    })
    .build()
    .unwrap();
    let direct = cluster.client(0xa1);

    let mut handle = subscriber.subscribe(vec![]).await.unwrap();
    // Remove the subscription behind the stream's back, then cut the
    // socket: the re-attach is refused and the stream ends rather than
    // retrying forever.
    assert!(direct.unsubscribe(handle.sub_id()).await.unwrap());
    proxy.sever().await;

    let err = tokio::time::timeout(Duration::from_secs(5), handle.recv())
        .await
        .expect("timed out waiting for the stream to end")
        .unwrap_err();
    assert!(matches!(err, ClientError::StreamClosed(_)), "{err}");

    proxy.stop();
    cluster.shutdown().await;
}

#[tokio::test]
async fn tls_certificates_identify_the_client() {
    use sieve_net::testcerts::TestCa;

    let dir = tempfile::tempdir().unwrap();
    let ca = TestCa::new(dir.path());
    let server_identity = ca.issue_server("balancer");
    let alice = ca.issue_client("alice");

    let matcher = sieve_matcher::spawn(MatcherConfig::local(0)).await.unwrap();
    let mut config = FrontendConfig::local([matcher.url()]);
    config.auth_mode = sieve_net::AuthMode::Mtls;
    config.tls = Some(sieve_net::TlsPaths {
        cert: server_identity.cert_pem.clone(),
        key: server_identity.key_pem.clone(),
        client_ca: Some(ca.ca_pem().to_path_buf()),
    });
    let lb = sieve_frontend::spawn(config).await.unwrap();

    let identity = ClientIdentity::from_cert_pem(&alice.cert_pem, &alice.key_pem).unwrap();
    assert_eq!(identity.auth_hash(), &alice.auth_hash);
    let client = Client::builder(format!("https://{}", lb.addr), identity)
        .ca_file(ca.ca_pem())
        .build()
        .unwrap();

    // Full round trip under mutual TLS: REST subscribe, WebSocket attach,
    // publish, delivery, unsubscribe.
    let mut handle = client.subscribe(vec![]).await.unwrap();
    let ack = client.publish(&json!({ "x": 1 })).await.unwrap();
    let envelope = recv(&mut handle).await;
    assert_eq!(envelope.pub_id, ack.pub_id);
    assert!(handle.close().await.unwrap());

    lb.shutdown();
    matcher.shutdown().await;
}

//! Live subscriber connections and their bounded delivery buffers.
//!
//! One WebSocket connection may be attached per `(identity, sub_id)`;
//! attaching again displaces the previous connection, which is closed with
//! code 4000. Workers push pre-serialized envelopes through [`deliver`];
//! a full buffer evicts its oldest envelope (slow consumers lose data,
//! bounded memory wins). The connection's writer task drains the buffer to
//! the socket and owns the `delivered` accounting — an envelope counts as
//! delivered only once written to the socket.
//!
//! [`deliver`]: ConnectionRegistry::deliver

use parking_lot::Mutex;
use sieve_core::{AuthHash, SubId};
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use tokio::sync::Notify;

pub type ConnKey = (AuthHash, SubId);

/// Why a writer loop should stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    /// Send a WebSocket close frame with this code first (displacement).
    Displace(u16),
    /// The peer is gone; just stop.
    Gone,
}

#[derive(Default)]
struct BufInner {
    frames: VecDeque<String>,
    close: Option<CloseReason>,
}

/// Bounded frame buffer between matching workers and one connection's writer.
pub struct ConnBuffer {
    inner: Mutex<BufInner>,
    notify: Notify,
    capacity: usize,
}

/// Outcome of pushing one envelope.
#[derive(Debug, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    /// Queued, but this many oldest envelopes were evicted to make room.
    QueuedEvicted(u64),
    /// The connection is closing; nothing was queued.
    NoConnection,
}

impl ConnBuffer {
    fn new(capacity: usize) -> Self {
        ConnBuffer {
            inner: Mutex::default(),
            notify: Notify::new(),
            capacity,
        }
    }

    fn push(&self, frame: String) -> PushOutcome {
        let outcome = {
            let mut inner = self.inner.lock();
            if inner.close.is_some() {
                return PushOutcome::NoConnection;
            }
            let mut evicted = 0;
            while inner.frames.len() >= self.capacity {
                inner.frames.pop_front();
                evicted += 1;
            }
            inner.frames.push_back(frame);
            if evicted == 0 {
                PushOutcome::Queued
            } else {
                PushOutcome::QueuedEvicted(evicted)
            }
        };
        self.notify.notify_one();
        outcome
    }

    /// Asks the writer to stop; idempotent, first reason wins.
    pub fn request_close(&self, reason: CloseReason) {
        {
            let mut inner = self.inner.lock();
            if inner.close.is_none() {
                inner.close = Some(reason);
            }
        }
        self.notify.notify_one();
    }

    /// Takes the buffered frames and the close request, if any.
    pub fn drain(&self) -> (Vec<String>, Option<CloseReason>) {
        let mut inner = self.inner.lock();
        (inner.frames.drain(..).collect(), inner.close)
    }

    /// Waits until new frames or a close request arrive.
    pub async fn wait(&self) {
        self.notify.notified().await;
    }

    /// Frames still queued (undeliverable once the connection closes).
    pub fn pending(&self) -> u64 {
        self.inner.lock().frames.len() as u64
    }
}

/// All live subscriber connections of this matcher.
pub struct ConnectionRegistry {
    conns: Mutex<HashMap<ConnKey, Arc<ConnBuffer>>>,
    buffer_capacity: usize,
}

impl ConnectionRegistry {
    pub fn new(buffer_capacity: usize) -> Self {
        ConnectionRegistry {
            conns: Mutex::new(HashMap::new()),
            buffer_capacity,
        }
    }

    /// Registers a fresh connection for the key, displacing any previous one
    /// (the displaced buffer is told to close with code 4000 by the caller).
    pub fn attach(&self, key: ConnKey) -> (Arc<ConnBuffer>, Option<Arc<ConnBuffer>>) {
        let fresh = Arc::new(ConnBuffer::new(self.buffer_capacity));
        let displaced = self.conns.lock().insert(key, Arc::clone(&fresh));
        (fresh, displaced)
    }

    /// Removes the key's entry, but only if it still maps to `buffer` —
    /// a displaced connection must not tear down its displacer.
    pub fn detach(&self, key: &ConnKey, buffer: &Arc<ConnBuffer>) {
        let mut conns = self.conns.lock();
        if conns.get(key).is_some_and(|b| Arc::ptr_eq(b, buffer)) {
            conns.remove(key);
        }
    }

    /// The live buffer for a key, if any (e.g. to close it on unsubscribe).
    pub fn buffer_of(&self, key: &ConnKey) -> Option<Arc<ConnBuffer>> {
        self.conns.lock().get(key).cloned()
    }

    /// Pushes an envelope towards a subscriber, if connected.
    pub fn deliver(&self, key: &ConnKey, frame: String) -> PushOutcome {
        let buffer = self.conns.lock().get(key).cloned();
        match buffer {
            Some(buffer) => buffer.push(frame),
            None => PushOutcome::NoConnection,
        }
    }

    pub fn connection_count(&self) -> usize {
        self.conns.lock().len()
    }

    /// Closes every connection (node shutdown).
    pub fn close_all(&self) {
        for buffer in self.conns.lock().values() {
            buffer.request_close(CloseReason::Gone);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: u8) -> ConnKey {
        (
            AuthHash::parse(&format!("{n:02x}").repeat(32)).unwrap(),
            SubId::parse(&format!("{n:032x}")).unwrap(),
        )
    }

    #[test]
    fn overflow_evicts_the_oldest_frame() {
        let registry = ConnectionRegistry::new(2);
        let (buffer, _) = registry.attach(key(1));
        assert_eq!(registry.deliver(&key(1), "a".into()), PushOutcome::Queued);
        assert_eq!(registry.deliver(&key(1), "b".into()), PushOutcome::Queued);
        assert_eq!(
            registry.deliver(&key(1), "c".into()),
            PushOutcome::QueuedEvicted(1)
        );
        let (frames, close) = buffer.drain();
        assert_eq!(frames, vec!["b".to_string(), "c".to_string()]);
        assert_eq!(close, None);
    }

    #[test]
    fn reattach_displaces_and_detach_is_guarded() {
        let registry = ConnectionRegistry::new(8);
        let (first, none) = registry.attach(key(1));
        assert!(none.is_none());
        let (second, displaced) = registry.attach(key(1));
        assert!(Arc::ptr_eq(&displaced.unwrap(), &first));

        // The displaced connection's teardown must not remove the new one.
        registry.detach(&key(1), &first);
        assert_eq!(registry.connection_count(), 1);
        assert_eq!(registry.deliver(&key(1), "x".into()), PushOutcome::Queued);
        assert_eq!(second.pending(), 1);

        registry.detach(&key(1), &second);
        assert_eq!(registry.connection_count(), 0);
        assert_eq!(
            registry.deliver(&key(1), "y".into()),
            PushOutcome::NoConnection
        );
    }

    #[test]
    fn closed_buffers_refuse_frames() {
        let registry = ConnectionRegistry::new(8);
        let (buffer, _) = registry.attach(key(2));
        buffer.request_close(CloseReason::Displace(4000));
        assert_eq!(
            registry.deliver(&key(2), "z".into()),
            PushOutcome::NoConnection
        );
        let (_, close) = buffer.drain();
        assert_eq!(close, Some(CloseReason::Displace(4000)));
        // First reason sticks.
        buffer.request_close(CloseReason::Gone);
        assert_eq!(buffer.drain().1, Some(CloseReason::Displace(4000)));
    }
}

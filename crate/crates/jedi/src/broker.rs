//! An in-process router. It sees URIs and ciphertexts only; it never holds
//! a secret or symmetric key.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use jedi_core::pattern::{matches_uri, Uri};
use jedi_core::protocol::{EpochIntegrityHeader, HybridCiphertext, MacTag};

use crate::files::{FileObject, MessageFile};

/// What travels through the broker: the message, plus the signed epoch
/// header and the message's tag when the stream has integrity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Envelope {
    pub message: HybridCiphertext,
    pub header: Option<EpochIntegrityHeader>,
    pub tag: Option<MacTag>,
}

impl Envelope {
    pub fn plain(message: HybridCiphertext) -> Self {
        Envelope { message, header: None, tag: None }
    }

    /// Bytes as sent on the wire.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = MessageFile { message: self.message.clone(), tag: self.tag }
            .to_file_bytes()
            .expect("message encoding is infallible");
        if let Some(h) = &self.header {
            out.extend_from_slice(&h.encode());
        }
        out
    }
}

pub type SubscriberId = u64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub published: u64,
    /// Deliveries, counting each subscriber a message went to.
    pub routed: u64,
    /// Messages no subscriber matched.
    pub dropped: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

struct Subscription {
    filter: Uri,
    queue: VecDeque<Arc<Envelope>>,
}

#[derive(Default)]
struct State {
    subs: BTreeMap<SubscriberId, Subscription>,
    stats: BrokerStats,
    closed: bool,
    log: Option<Vec<Arc<Envelope>>>,
}

/// Internally synchronized; share it behind an `Arc`.
#[derive(Default)]
pub struct Broker {
    state: Mutex<State>,
    ready: Condvar,
}

impl Broker {
    pub fn new() -> Self {
        Broker::default()
    }

    /// A broker that also keeps every published envelope, so its full
    /// observable state can be inspected.
    pub fn with_log() -> Self {
        let b = Broker::default();
        b.lock().log = Some(Vec::new());
        b
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Replaces any earlier subscription of `id`.
    pub fn subscribe(&self, id: SubscriberId, filter: Uri) {
        self.lock().subs.insert(id, Subscription { filter, queue: VecDeque::new() });
    }

    pub fn unsubscribe(&self, id: SubscriberId) -> bool {
        self.lock().subs.remove(&id).is_some()
    }

    /// Queues `env` for every subscriber whose filter matches its URI and
    /// returns how many that was.
    pub fn publish(&self, env: Envelope) -> usize {
        let size = env.encode().len() as u64;
        let env = Arc::new(env);
        let mut st = self.lock();
        st.stats.published += 1;
        st.stats.bytes_in += size;
        let mut fanout = 0;
        for sub in st.subs.values_mut() {
            if matches_uri(&sub.filter, &env.message.uri) {
                sub.queue.push_back(env.clone());
                fanout += 1;
            }
        }
        if fanout == 0 {
            st.stats.dropped += 1;
        }
        st.stats.routed += fanout as u64;
        st.stats.bytes_out += size * fanout as u64;
        if let Some(log) = &mut st.log {
            log.push(env);
        }
        drop(st);
        if fanout > 0 {
            self.ready.notify_all();
        }
        fanout
    }

    pub fn try_recv(&self, id: SubscriberId) -> Option<Arc<Envelope>> {
        self.lock().subs.get_mut(&id)?.queue.pop_front()
    }

    /// Blocks until a message for `id` is queued. Returns `None` once the
    /// broker is closed and the queue is drained, or if `id` is unknown.
    pub fn recv(&self, id: SubscriberId) -> Option<Arc<Envelope>> {
        let mut st = self.lock();
        loop {
            let sub = st.subs.get_mut(&id)?;
            if let Some(env) = sub.queue.pop_front() {
                return Some(env);
            }
            if st.closed {
                return None;
            }
            st = self.ready.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Stops blocking receivers once their queues are empty.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn stats(&self) -> BrokerStats {
        self.lock().stats
    }

    pub fn queued(&self, id: SubscriberId) -> usize {
        self.lock().subs.get(&id).map_or(0, |s| s.queue.len())
    }

    /// Everything the broker currently stores, serialized: queued messages,
    /// the log if kept, and the subscription filters.
    pub fn observable_bytes(&self) -> Vec<u8> {
        let st = self.lock();
        let mut out = Vec::new();
        for sub in st.subs.values() {
            out.extend_from_slice(sub.filter.to_string().as_bytes());
            for env in &sub.queue {
                out.extend_from_slice(&env.encode());
            }
        }
        for env in st.log.iter().flatten() {
            out.extend_from_slice(&env.encode());
        }
        out
    }
}

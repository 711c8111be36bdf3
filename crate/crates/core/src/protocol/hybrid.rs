use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::vec::Vec;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::store::{read_time, write_time, KeyMaterial, KeyStore};
use super::Hierarchy;
use crate::error::{Error, Result};
use crate::groups::Gt;
use crate::metrics::{bump, Counter};
use crate::pattern::{Hour, TimePath, Uri};
use crate::revocation::{decrypt_revocable, encrypt_revocable_prepared, NodeCiphertext, NodeId, RevocationList};
use crate::wire::{tag, Reader, Writer};
use crate::wkdibe::{decrypt, decrypt_with_master, Pattern, Precomputed, WkdCiphertext};

const KDF_DOMAIN: u8 = 0x03;

fn symmetric_key(gt: &Gt) -> [u8; 32] {
    Sha256::new().chain_update([KDF_DOMAIN]).chain_update(gt.to_bytes()).finalize().into()
}

/// The WKD-IBE encryption of a message's symmetric key: one ciphertext, or
/// one per node of the revocation cover.
// Short-lived and built once per rotation, so the size gap is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum WrappedKey {
    Plain(WkdCiphertext),
    Revocable(Vec<NodeCiphertext>),
}

impl WrappedKey {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            WrappedKey::Plain(c) => {
                w.u8(0);
                w.ciphertext(c);
            }
            WrappedKey::Revocable(cts) => {
                w.u8(1);
                w.u32(cts.len() as u32);
                for c in cts {
                    w.u8(c.node.depth());
                    w.u32(c.node.bits());
                    w.ciphertext(&c.ct);
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |_| Error::MalformedCiphertext("wrapped key");
        let mut r = Reader::new(bytes);
        let out = match r.u8().map_err(bad)? {
            0 => WrappedKey::Plain(r.ciphertext().map_err(bad)?),
            1 => {
                let n = r.u32().map_err(bad)?;
                let mut cts = Vec::new();
                for _ in 0..n {
                    let node = NodeId::new(r.u8().map_err(bad)?, r.u32().map_err(bad)?).map_err(bad)?;
                    cts.push(NodeCiphertext { node, ct: r.ciphertext().map_err(bad)? });
                }
                WrappedKey::Revocable(cts)
            }
            _ => return Err(Error::MalformedCiphertext("wrapped key kind")),
        };
        r.finish().map_err(bad)?;
        Ok(out)
    }
}

/// A published message: routing metadata in the clear, the wrapped key
/// (shared by all messages of one URI, hour and revocation epoch) and the
/// AEAD-sealed payload.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HybridCiphertext {
    pub hierarchy: [u8; 32],
    pub uri: Uri,
    pub time: TimePath,
    /// Revocation-list epoch the wrapped key was made under.
    pub epoch: u64,
    /// Encoded [`WrappedKey`]; kept as bytes so the common path never parses it.
    pub wrapped: Vec<u8>,
    pub nonce: [u8; 12],
    pub payload: Vec<u8>,
}

impl HybridCiphertext {
    pub fn wrapped_key(&self) -> Result<WrappedKey> {
        WrappedKey::decode(&self.wrapped)
    }

    /// Associated data binding the payload to the header and wrapped key.
    pub fn aad(&self) -> Vec<u8> {
        header_aad(&self.hierarchy, &self.uri, &self.time, self.epoch, &wrapped_digest(&self.wrapped))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::MESSAGE);
        w.raw(&self.hierarchy);
        w.str(&format!("{}", self.uri));
        write_time(&mut w, &self.time);
        w.u64(self.epoch);
        w.bytes(&self.wrapped);
        w.raw(&self.nonce);
        w.bytes(&self.payload);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::MESSAGE)?;
        let hierarchy = r.array()?;
        let uri = Uri::parse(&r.string()?).map_err(|_| Error::MalformedCiphertext("message URI"))?;
        let time = read_time(&mut r)?;
        let epoch = r.u64()?;
        let wrapped = r.bytes()?.to_vec();
        let nonce = r.array()?;
        let payload = r.bytes()?.to_vec();
        r.finish()?;
        Ok(HybridCiphertext { hierarchy, uri, time, epoch, wrapped, nonce, payload })
    }
}

/// The wrapped key enters the associated data through its digest, so the
/// per-message AEAD work does not grow with the wrapped key.
fn wrapped_digest(wrapped: &[u8]) -> [u8; 32] {
    Sha256::digest(wrapped).into()
}

fn header_aad(hierarchy: &[u8; 32], uri: &Uri, time: &TimePath, epoch: u64, wrapped: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(hierarchy);
    w.str(&format!("{uri}"));
    write_time(&mut w, time);
    w.u64(epoch);
    w.raw(wrapped);
    w.finish()
}

struct Current {
    uri: Uri,
    leaf: TimePath,
    epoch: u64,
    key: [u8; 32],
    wrapped: Vec<u8>,
    aad: Vec<u8>,
}

/// A publisher's stream state. The symmetric key and its wrapping are
/// reused until the URI, the hour or the revocation epoch changes; the
/// precomputed pattern value is adjusted rather than rebuilt on rotation.
pub struct PublisherSession {
    hierarchy: Hierarchy,
    current: Option<Current>,
    prepared: Option<Precomputed>,
    rotations: u64,
}

impl PublisherSession {
    pub fn new(hierarchy: Hierarchy) -> Self {
        PublisherSession { hierarchy, current: None, prepared: None, rotations: 0 }
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    /// How many times a fresh key was wrapped.
    pub fn rotations(&self) -> u64 {
        self.rotations
    }

    /// Encrypts `plaintext` for `uri` at time `now`. `revocations` is the
    /// hierarchy's current list, if it has revocation slots.
    pub fn publish_encrypt<R: RngCore + CryptoRng>(
        &mut self,
        uri: &Uri,
        now: Hour,
        plaintext: &[u8],
        revocations: Option<&RevocationList>,
        rng: &mut R,
    ) -> Result<HybridCiphertext> {
        let layout = *self.hierarchy.layout();
        let leaf = layout.leaf(now);
        let epoch = revocations.map_or(0, |l| l.epoch_for(uri));
        let fresh = self.current.as_ref().is_some_and(|c| c.epoch == epoch && c.leaf == leaf && c.uri == *uri);
        if !fresh {
            self.rotate(uri, leaf, epoch, revocations, rng)?;
        }
        let cur = self.current.as_ref().expect("rotated above");
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut nonce);
        let payload = Aes256Gcm::new(&cur.key.into())
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &cur.aad })
            .map_err(|_| Error::AuthFailure)?;
        bump(Counter::AeadSeal);
        Ok(HybridCiphertext {
            hierarchy: *self.hierarchy.id(),
            uri: cur.uri.clone(),
            time: cur.leaf.clone(),
            epoch: cur.epoch,
            wrapped: cur.wrapped.clone(),
            nonce,
            payload,
        })
    }

    fn rotate<R: RngCore + CryptoRng>(
        &mut self,
        uri: &Uri,
        leaf: TimePath,
        epoch: u64,
        revocations: Option<&RevocationList>,
        rng: &mut R,
    ) -> Result<()> {
        let params = self.hierarchy.params();
        let pattern = self.hierarchy.layout().message_pattern(uri, &leaf)?;
        let prepared = match &self.prepared {
            Some(p) => params.adjust_precomputed(p, &pattern)?,
            None => params.precompute(&pattern)?,
        };
        let seed = params.random_gt(rng);
        let wrapped = match self.hierarchy.revocation_tree() {
            None => WrappedKey::Plain(params.encrypt_prepared(&prepared, &seed, rng)),
            Some(tree) => {
                let revoked = revocations.map(|l| l.revoked_for(uri)).unwrap_or_default();
                WrappedKey::Revocable(encrypt_revocable_prepared(params, &tree, &prepared, &revoked, &seed, rng)?)
            }
        };
        let wrapped = wrapped.encode();
        let aad = header_aad(self.hierarchy.id(), uri, &leaf, epoch, &wrapped_digest(&wrapped));
        self.prepared = Some(prepared);
        self.current = Some(Current { uri: uri.clone(), leaf, epoch, key: symmetric_key(&seed), wrapped, aad });
        self.rotations += 1;
        Ok(())
    }
}

/// Unwrapped symmetric keys (and wrapped-key digests) by wrapped-key
/// bytes, oldest evicted first.
#[derive(Clone, Debug)]
pub struct DecryptionCache {
    keys: BTreeMap<Vec<u8>, ([u8; 32], [u8; 32])>,
    order: VecDeque<Vec<u8>>,
    capacity: usize,
}

impl Default for DecryptionCache {
    fn default() -> Self {
        Self::new(1024)
    }
}

impl DecryptionCache {
    pub fn new(capacity: usize) -> Self {
        DecryptionCache { keys: BTreeMap::new(), order: VecDeque::new(), capacity: capacity.max(1) }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn insert(&mut self, wrapped: &[u8], key: [u8; 32], digest: [u8; 32]) {
        if self.keys.insert(wrapped.to_vec(), (key, digest)).is_none() {
            self.order.push_back(wrapped.to_vec());
            if self.order.len() > self.capacity {
                let old = self.order.pop_front().expect("non-empty");
                self.keys.remove(&old);
            }
        }
    }
}

fn open(key: &[u8; 32], digest: &[u8; 32], ct: &HybridCiphertext) -> Result<Vec<u8>> {
    bump(Counter::AeadOpen);
    let aad = header_aad(&ct.hierarchy, &ct.uri, &ct.time, ct.epoch, digest);
    Aes256Gcm::new(key.into())
        .decrypt(Nonce::from_slice(&ct.nonce), Payload { msg: &ct.payload, aad: &aad })
        .map_err(|_| Error::AuthFailure)
}

/// Decrypts a message with the best matching key in `store`, or with a
/// cached symmetric key if its wrapped key was seen before.
pub fn subscribe_decrypt(store: &KeyStore, cache: &mut DecryptionCache, ct: &HybridCiphertext) -> Result<Vec<u8>> {
    let h = store.hierarchy(&ct.hierarchy)?;
    if let Some((key, digest)) = cache.keys.get(&ct.wrapped) {
        bump(Counter::CacheHit);
        return open(key, digest, ct);
    }
    let pattern = h
        .layout()
        .message_pattern(&ct.uri, &ct.time)
        .map_err(|_| Error::MalformedCiphertext("URI or time is not a message location"))?;
    let wrapped = ct.wrapped_key()?;
    let tree = h.revocation_tree();
    let seed = match (&wrapped, &tree) {
        (WrappedKey::Plain(_), Some(_)) | (WrappedKey::Revocable(_), None) => {
            return Err(Error::MalformedCiphertext("wrapped key kind does not match hierarchy"))
        }
        _ => unwrap_seed(store, h, &pattern, &wrapped)?,
    };
    let key = symmetric_key(&seed);
    let digest = wrapped_digest(&ct.wrapped);
    let plain = open(&key, &digest, ct)?;
    cache.insert(&ct.wrapped, key, digest);
    Ok(plain)
}

fn unwrap_seed(store: &KeyStore, h: &Hierarchy, pattern: &Pattern, wrapped: &WrappedKey) -> Result<Gt> {
    let params = h.params();
    let tree = h.revocation_tree();
    let as_auth = |e: Error| match e {
        Error::NotAMatch | Error::PatternMismatch => Error::AuthFailure,
        e => e,
    };
    if let Some(master) = store.master(h.id()) {
        let (target, ct) = match (wrapped, &tree) {
            (WrappedKey::Plain(c), _) => (pattern.clone(), c),
            (WrappedKey::Revocable(cts), Some(t)) => {
                let first = cts.first().ok_or(Error::Revoked)?;
                (t.node_pattern(pattern, &first.node)?, &first.ct)
            }
            _ => return Err(Error::MalformedCiphertext("wrapped key kind does not match hierarchy")),
        };
        if target.digest() != *ct.pattern_digest() {
            return Err(Error::AuthFailure);
        }
        return Ok(decrypt_with_master(master, ct));
    }
    let mut last = Error::NoMatchingKey;
    for e in store.lookup(h.id(), pattern) {
        let attempt = match (&e.material, wrapped, &tree) {
            (KeyMaterial::Single(k), WrappedKey::Plain(c), _) => {
                params.non_delegable_key_der(k, pattern).and_then(|exact| decrypt(&exact, c))
            }
            (KeyMaterial::Ranged(b), WrappedKey::Revocable(cts), Some(t)) => {
                decrypt_revocable(params, t, b, pattern, cts)
            }
            _ => Err(Error::NoMatchingKey),
        };
        match attempt {
            Ok(gt) => return Ok(gt),
            Err(Error::Revoked) => last = Error::Revoked,
            Err(e @ (Error::NotAMatch | Error::PatternMismatch)) => return Err(as_auth(e)),
            Err(Error::NoMatchingKey) => {}
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

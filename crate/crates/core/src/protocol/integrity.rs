use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use hmac::{Hmac, Mac};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::store::{read_time, write_time, KeyMaterial, KeyStore};
use super::Hierarchy;
use crate::error::{Error, Result};
use crate::groups::{hash_to_scalar, Scalar};
use crate::pattern::{Hour, TimePath, Uri};
use crate::wire::{tag, Reader, Writer};
use crate::wkdibe::{Pattern, Signature};

const CHAIN_DOMAIN: u8 = 0x04;

fn chain_step(k: &[u8; 32]) -> [u8; 32] {
    Sha256::new().chain_update([CHAIN_DOMAIN]).chain_update(k).finalize().into()
}

fn hash_n(mut k: [u8; 32], n: u32) -> [u8; 32] {
    for _ in 0..n {
        k = chain_step(&k);
    }
    k
}

/// Keys `k_0 .. k_L` with `k_{i-1} = H(k_i)`. `k_0` is the public
/// commitment and `k_i` authenticates message `i - 1`.
///
/// Only every `ceil(sqrt(L))`-th key and `k_L` are stored; any other key
/// is recomputed from the next stored one.
#[derive(Clone, Debug)]
pub struct HashChain {
    length: u32,
    head: [u8; 32],
    checkpoints: BTreeMap<u32, [u8; 32]>,
}

impl HashChain {
    pub fn new<R: RngCore + CryptoRng>(length: u32, rng: &mut R) -> Result<Self> {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        HashChain::from_seed(length, seed)
    }

    /// Rebuilds the chain whose last key `k_L` is `seed`.
    pub fn from_seed(length: u32, seed: [u8; 32]) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidConfig("hash chain needs at least one key"));
        }
        let root = length.isqrt();
        let step = if root * root < length { root + 1 } else { root };
        let mut k = seed;
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert(length, k);
        for i in (0..length).rev() {
            k = chain_step(&k);
            if i > 0 && i % step == 0 {
                checkpoints.insert(i, k);
            }
        }
        Ok(HashChain { length, head: k, checkpoints })
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn commitment(&self) -> &[u8; 32] {
        &self.head
    }

    /// The secret last key, from which the whole chain is rebuilt.
    pub fn seed(&self) -> &[u8; 32] {
        &self.checkpoints[&self.length]
    }

    /// Number of chain keys kept in memory.
    pub fn stored_hashes(&self) -> usize {
        self.checkpoints.len()
    }

    /// `k_i` for `1 <= i <= length`.
    pub fn key(&self, i: u32) -> Result<[u8; 32]> {
        if i == 0 || i > self.length {
            return Err(Error::ChainExhausted);
        }
        let (&at, k) = self.checkpoints.range(i..).next().expect("k_L is always stored");
        Ok(hash_n(*k, at - i))
    }
}

/// Signed announcement of a hash chain for one (URI, hour). The signature
/// reveals only that the signer holds a key for that pattern.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EpochIntegrityHeader {
    pub hierarchy: [u8; 32],
    pub uri: Uri,
    pub time: TimePath,
    pub pattern_digest: [u8; 32],
    pub commitment: [u8; 32],
    pub chain_length: u32,
    pub signature: Signature,
}

fn signed_value(commitment: &[u8; 32], length: u32) -> Scalar {
    let mut buf = Vec::with_capacity(36);
    buf.extend_from_slice(commitment);
    buf.extend_from_slice(&length.to_be_bytes());
    hash_to_scalar(&buf)
}

impl EpochIntegrityHeader {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::EPOCH_HEADER);
        w.raw(&self.hierarchy);
        w.str(&format!("{}", self.uri));
        write_time(&mut w, &self.time);
        w.raw(&self.pattern_digest);
        w.raw(&self.commitment);
        w.u32(self.chain_length);
        w.raw(&self.signature.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::EPOCH_HEADER)?;
        let hierarchy = r.array()?;
        let uri = Uri::parse(&r.string()?).map_err(|_| Error::MalformedEncoding("header URI"))?;
        let time = read_time(&mut r)?;
        let pattern_digest = r.array()?;
        let commitment = r.array()?;
        let chain_length = r.u32()?;
        let signature = Signature::from_bytes(r.take(144)?)?;
        r.finish()?;
        Ok(EpochIntegrityHeader { hierarchy, uri, time, pattern_digest, commitment, chain_length, signature })
    }
}

/// Checks the header's signature under the (URI, hour) pattern it names.
pub fn verify_epoch_header(hierarchy: &Hierarchy, header: &EpochIntegrityHeader) -> bool {
    if header.hierarchy != *hierarchy.id() {
        return false;
    }
    let Ok(pattern) = hierarchy.layout().message_pattern(&header.uri, &header.time) else {
        return false;
    };
    pattern.digest() == header.pattern_digest
        && hierarchy.params().verify(
            &pattern,
            &header.signature,
            &signed_value(&header.commitment, header.chain_length),
        )
}

/// Publisher side of an epoch: the chain and the next usable index.
#[derive(Clone, Debug)]
pub struct EpochSigner {
    header: EpochIntegrityHeader,
    chain: HashChain,
    next: u32,
}

/// Builds a hash chain for messages on `uri` during the hour slot ending at
/// `now` and signs its commitment with a key from `store`.
pub fn start_epoch_integrity<R: RngCore + CryptoRng>(
    store: &KeyStore,
    hierarchy: &[u8; 32],
    uri: &Uri,
    now: Hour,
    chain_length: u32,
    rng: &mut R,
) -> Result<EpochSigner> {
    let h = store.hierarchy(hierarchy)?;
    let time = h.layout().leaf(now);
    let pattern = h.layout().message_pattern(uri, &time)?;
    let chain = HashChain::new(chain_length, rng)?;
    let m = signed_value(chain.commitment(), chain_length);
    let signature = sign_for(store, h, &pattern, &m, rng)?;
    let header = EpochIntegrityHeader {
        hierarchy: *h.id(),
        uri: uri.clone(),
        time,
        pattern_digest: pattern.digest(),
        commitment: *chain.commitment(),
        chain_length,
        signature,
    };
    Ok(EpochSigner { header, chain, next: 0 })
}

fn sign_for<R: RngCore + CryptoRng>(
    store: &KeyStore,
    h: &Hierarchy,
    pattern: &Pattern,
    m: &Scalar,
    rng: &mut R,
) -> Result<Signature> {
    let params = h.params();
    if !params.has_signature_slot() {
        return Err(Error::NoSigningAuthority);
    }
    if let Some(master) = store.master(h.id()) {
        let key = params.key_der(master, pattern, rng)?;
        return params.sign(&key, m, rng);
    }
    for e in store.lookup(h.id(), pattern) {
        let key = match &e.material {
            KeyMaterial::Single(k) => k,
            KeyMaterial::Ranged(b) => match b.signer() {
                Some(k) => k,
                None => continue,
            },
        };
        if key.can_sign() && key.can_derive(pattern) {
            return params.generalized_sign(key, pattern, m, rng);
        }
    }
    Err(Error::NoSigningAuthority)
}

/// A per-message authenticator: the index, the revealed chain key and the
/// HMAC of the payload under it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MacTag {
    pub index: u32,
    pub key: [u8; 32],
    pub tag: [u8; 32],
}

impl MacTag {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::MAC_TAG);
        w.u32(self.index);
        w.raw(&self.key);
        w.raw(&self.tag);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::MAC_TAG)?;
        let t = MacTag { index: r.u32()?, key: r.array()?, tag: r.array()? };
        r.finish()?;
        Ok(t)
    }
}

fn hmac(key: &[u8; 32], index: u32, payload: &[u8]) -> Hmac<Sha256> {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("any key length");
    mac.update(&index.to_be_bytes());
    mac.update(payload);
    mac
}

impl EpochSigner {
    /// Resumes an epoch whose chain was saved; `next` is the first unused index.
    pub fn resume(header: EpochIntegrityHeader, chain: HashChain, next: u32) -> Result<Self> {
        if *chain.commitment() != header.commitment || chain.length != header.chain_length {
            return Err(Error::MalformedEncoding("chain does not match header"));
        }
        Ok(EpochSigner { header, chain, next })
    }

    pub fn next_index(&self) -> u32 {
        self.next
    }

    pub fn header(&self) -> &EpochIntegrityHeader {
        &self.header
    }

    pub fn chain(&self) -> &HashChain {
        &self.chain
    }

    /// Authenticates `payload` as message `index`. Indices must increase.
    pub fn mac_message(&mut self, index: u32, payload: &[u8]) -> Result<MacTag> {
        if index >= self.chain.length {
            return Err(Error::ChainExhausted);
        }
        if index < self.next {
            return Err(Error::IndexOutOfOrder { got: index, last: self.next - 1 });
        }
        let key = self.chain.key(index + 1)?;
        self.next = index + 1;
        Ok(MacTag { index, key, tag: hmac(&key, index, payload).finalize().into_bytes().into() })
    }

    /// [`mac_message`](Self::mac_message) at the next unused index.
    pub fn mac_next(&mut self, payload: &[u8]) -> Result<MacTag> {
        self.mac_message(self.next, payload)
    }
}

/// Stateless check: the revealed key hashes to the commitment in
/// `index + 1` steps and the MAC is valid.
pub fn verify_mac(header: &EpochIntegrityHeader, tag: &MacTag, payload: &[u8]) -> bool {
    tag.index < header.chain_length
        && hash_n(tag.key, tag.index + 1) == header.commitment
        && hmac(&tag.key, tag.index, payload).verify_slice(&tag.tag).is_ok()
}

/// Receiver side of an epoch. Rejects indices that do not increase and
/// only hashes back to the last verified key.
#[derive(Clone, Debug)]
pub struct EpochVerifier {
    header: EpochIntegrityHeader,
    anchor: (u32, [u8; 32]),
    last: Option<u32>,
}

impl EpochVerifier {
    /// The header's signature must already have been checked with
    /// [`verify_epoch_header`].
    pub fn new(header: EpochIntegrityHeader) -> Self {
        let anchor = (0, header.commitment);
        EpochVerifier { header, anchor, last: None }
    }

    pub fn header(&self) -> &EpochIntegrityHeader {
        &self.header
    }

    pub fn verify(&mut self, tag: &MacTag, payload: &[u8]) -> Result<()> {
        if tag.index >= self.header.chain_length {
            return Err(Error::ChainExhausted);
        }
        if let Some(last) = self.last {
            if tag.index <= last {
                return Err(Error::IndexOutOfOrder { got: tag.index, last });
            }
        }
        let position = tag.index + 1;
        let (at, anchor) = self.anchor;
        if hash_n(tag.key, position - at) != anchor {
            return Err(Error::AuthFailure);
        }
        hmac(&tag.key, tag.index, payload).verify_slice(&tag.tag).map_err(|_| Error::AuthFailure)?;
        self.anchor = (position, tag.key);
        self.last = Some(tag.index);
        Ok(())
    }
}

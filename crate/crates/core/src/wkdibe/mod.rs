//! Wildcarded key-derivation identity-based encryption (WKD-IBE).
//!
//! Keys and ciphertexts are bound to [`Pattern`]s: fixed-length lists whose
//! slots are either a nonzero scalar or free. A key for pattern `P` can derive
//! a key for any pattern `P` matches, and decrypts ciphertexts encrypted under
//! exactly `P`. This is the constant-size-ciphertext construction on top of
//! BBG HIBE, mapped onto the asymmetric BLS12-381 pairing as:
//!
//! * `g, g1 = g^alpha` in G2,
//! * `g2, g3, h_1..h_l, h_s` in G1,
//! * master key `g2^alpha` in G1,
//! * key `(k0, k1, {b_j})` with `k0, b_j` in G1 and `k1` in G2,
//! * ciphertext `(e(g2, g1)^s * m, g^s, Q_S^s)` with `Q_S = g3 * prod h_i^{a_i}`.
//!
//! Encryption is allowed under patterns that contain free slots; the product
//! in `Q_S` simply ranges over the fixed slots.
//!
//! Every randomized operation takes the randomness source explicitly. Given
//! two identically seeded sources, the fast paths ([`Params::encrypt_prepared`],
//! [`Params::sign_prepared`]) produce bit-identical output to the plain ones.

mod precompute;
mod signature;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use once_cell::race::OnceBox;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::groups::{multi_pair, G1Table, G2Table, Gt, GtTable, Scalar, G1, G2};
use crate::metrics::{self, Counter};

pub use precompute::Precomputed;
pub use signature::Signature;

/// Domain byte prefixed to pattern digests.
const PATTERN_DIGEST_DOMAIN: u8 = 0x02;

/// A list of slots, each fixed to a nonzero scalar or free.
///
/// Slot indices are zero-based throughout the API.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Pattern {
    slots: Vec<Option<Scalar>>,
}

impl Pattern {
    /// All-free pattern of the given length.
    pub fn free(len: usize) -> Self {
        Pattern { slots: alloc::vec![None; len] }
    }

    pub fn from_slots(slots: Vec<Option<Scalar>>) -> Result<Self> {
        if slots.iter().flatten().any(Scalar::is_zero) {
            return Err(Error::MalformedEncoding("pattern slot is zero"));
        }
        Ok(Pattern { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Option<Scalar>] {
        &self.slots
    }

    pub fn get(&self, i: usize) -> Option<&Scalar> {
        self.slots.get(i).and_then(Option::as_ref)
    }

    pub fn set(&mut self, i: usize, value: Option<Scalar>) -> Result<()> {
        if value.as_ref().is_some_and(Scalar::is_zero) {
            return Err(Error::MalformedEncoding("pattern slot is zero"));
        }
        let slot = self.slots.get_mut(i).ok_or(Error::InvalidLength("slot index"))?;
        *slot = value;
        Ok(())
    }

    /// `(index, value)` for every fixed slot, ascending.
    pub fn fixed(&self) -> impl Iterator<Item = (usize, &Scalar)> + '_ {
        self.slots.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    /// Indices of free slots, ascending.
    pub fn free_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(i, _)| i)
    }

    pub fn is_free(&self, i: usize) -> bool {
        matches!(self.slots.get(i), Some(None))
    }

    /// True iff every slot fixed in `self` holds the same value in `other`.
    /// Not symmetric.
    pub fn matches(&self, other: &Pattern) -> bool {
        self.len() == other.len() && self.slots.iter().zip(&other.slots).all(|(a, b)| a.is_none() || a == b)
    }

    /// Number of slots in which the two patterns differ.
    pub fn hamming(&self, other: &Pattern) -> usize {
        self.slots.iter().zip(&other.slots).filter(|(a, b)| a != b).count() + self.len().abs_diff(other.len())
    }

    /// SHA-256 over `0x02 || (u16 index || scalar)*` for the fixed slots.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([PATTERN_DIGEST_DOMAIN]);
        for (i, s) in self.fixed() {
            h.update((i as u16).to_be_bytes());
            h.update(s.to_bytes());
        }
        h.finalize().into()
    }
}

/// Public parameters of one WKD-IBE system.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Params {
    pub(crate) g: G2,
    pub(crate) g1: G2,
    pub(crate) g2: G1,
    pub(crate) g3: G1,
    pub(crate) h: Vec<G1>,
    pub(crate) h_s: Option<G1>,
    /// e(g2, g1), cached because every encryption and verification needs it.
    pub(crate) pairing_cache: Gt,
    pub(crate) tables: FixedTables,
}

/// Comb tables for `g`, `e(g2, g1)` and, per slot, the `h` bases (the
/// signature base last), built on first use. Not part of the parameters'
/// identity.
#[derive(Default)]
pub(crate) struct FixedTables {
    fixed: OnceBox<(G2Table, GtTable)>,
    slots: OnceBox<Vec<OnceBox<G1Table>>>,
}

impl Clone for FixedTables {
    fn clone(&self) -> Self {
        FixedTables::default()
    }
}

impl PartialEq for FixedTables {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for FixedTables {}

impl core::fmt::Debug for FixedTables {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("FixedTables")
    }
}

/// `g2^alpha`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MasterKey(pub(crate) G1);

/// A private key for one pattern.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SecretKey {
    pub(crate) k0: G1,
    pub(crate) k1: G2,
    /// `b_j` for free slots that may still be fixed by derivation.
    pub(crate) free_elems: BTreeMap<usize, G1>,
    /// `b_s` for the signature slot.
    pub(crate) sig_elem: Option<G1>,
    pub(crate) pattern: Pattern,
    /// False for the unrandomized output of `non_delegable_key_der`.
    pub(crate) delegable: bool,
}

impl SecretKey {
    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    /// True when every free slot can still be fixed.
    pub fn is_extendable(&self) -> bool {
        self.pattern.free_slots().all(|j| self.free_elems.contains_key(&j))
    }

    /// True unless the key came from `non_delegable_key_der` without resampling.
    pub fn is_delegable(&self) -> bool {
        self.delegable
    }

    pub fn can_sign(&self) -> bool {
        self.sig_elem.is_some()
    }

    pub fn can_fix(&self, slot: usize) -> bool {
        self.free_elems.contains_key(&slot)
    }

    /// True if a key for `target` can be derived from this one.
    pub fn can_derive(&self, target: &Pattern) -> bool {
        self.pattern.matches(target) && target.fixed().all(|(i, _)| !self.pattern.is_free(i) || self.can_fix(i))
    }

    /// Number of group elements held.
    pub fn element_count(&self) -> usize {
        2 + self.free_elems.len() + usize::from(self.sig_elem.is_some())
    }

    /// Limited delegation: drop every free-slot element (including the
    /// signature element). The result still decrypts ciphertexts under its
    /// own pattern but cannot derive anything.
    pub fn limit(&self) -> SecretKey {
        SecretKey { free_elems: BTreeMap::new(), sig_elem: None, ..self.clone() }
    }

    /// Drops the elements for the given slots only, so those slots can no
    /// longer be fixed while the rest of the key stays derivable.
    pub fn limit_slots(&self, slots: impl IntoIterator<Item = usize>) -> SecretKey {
        let mut out = self.clone();
        for j in slots {
            out.free_elems.remove(&j);
        }
        out
    }
}

/// Source key for derivation.
#[derive(Clone, Copy, Debug)]
pub enum KeyRef<'a> {
    Master(&'a MasterKey),
    Secret(&'a SecretKey),
}

impl<'a> From<&'a MasterKey> for KeyRef<'a> {
    fn from(k: &'a MasterKey) -> Self {
        KeyRef::Master(k)
    }
}

impl<'a> From<&'a SecretKey> for KeyRef<'a> {
    fn from(k: &'a SecretKey) -> Self {
        KeyRef::Secret(k)
    }
}

/// `(X, Y, Z)` plus the digest of the encryption pattern.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WkdCiphertext {
    pub(crate) x: Gt,
    pub(crate) y: G2,
    pub(crate) z: G1,
    pub(crate) pattern_digest: [u8; 32],
}

impl WkdCiphertext {
    pub fn pattern_digest(&self) -> &[u8; 32] {
        &self.pattern_digest
    }
}

/// Which elements a derived key keeps.
#[derive(Clone, Copy)]
pub(crate) struct Keep<'a> {
    /// Free slots whose elements are dropped.
    pub(crate) drop_slots: &'a [usize],
    pub(crate) signature: bool,
}

impl Keep<'_> {
    pub(crate) const ALL: Keep<'static> = Keep { drop_slots: &[], signature: true };

    fn slot(&self, j: usize) -> bool {
        !self.drop_slots.contains(&j)
    }
}

/// Creates a fresh system with `len` pattern slots and, optionally, the extra
/// slot used for signatures.
pub fn setup<R: RngCore + CryptoRng>(len: usize, signature_slot: bool, rng: &mut R) -> Result<(Params, MasterKey)> {
    if len == 0 {
        return Err(Error::InvalidLength("a system needs at least one slot"));
    }
    let g = G2::random(rng);
    let g2 = G1::random(rng);
    let g3 = G1::random(rng);
    let h = (0..len).map(|_| G1::random(rng)).collect();
    let h_s = signature_slot.then(|| G1::random(rng));
    let alpha = Scalar::random(rng);
    let g1 = g * alpha;
    let master = MasterKey(g2 * alpha);
    let pairing_cache = crate::groups::pair(&g2, &g1);
    Ok((Params { g, g1, g2, g3, h, h_s, pairing_cache, tables: FixedTables::default() }, master))
}

impl Params {
    /// Number of pattern slots.
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn tables(&self) -> &(G2Table, GtTable) {
        self.tables.fixed.get_or_init(|| Box::new((G2Table::new(&self.g), GtTable::new(&self.pairing_cache))))
    }

    /// `g * s` through the fixed-base table.
    pub(crate) fn g_mul(&self, s: &Scalar) -> G2 {
        self.tables().0.mul(s)
    }

    fn slot_table(&self, j: usize, base: &G1) -> &G1Table {
        let slots = self.tables.slots.get_or_init(|| Box::new((0..=self.h.len()).map(|_| OnceBox::new()).collect()));
        slots[j].get_or_init(|| Box::new(G1Table::new(base)))
    }

    /// `h_j * t` through a per-slot table; used for the free-slot elements
    /// of derived keys.
    pub(crate) fn h_mul(&self, j: usize, t: &Scalar) -> G1 {
        self.slot_table(j, &self.h[j]).mul(t)
    }

    /// `h_s * t`, if the system has a signature slot.
    pub(crate) fn hs_mul(&self, t: &Scalar) -> Option<G1> {
        self.h_s.as_ref().map(|hs| self.slot_table(self.h.len(), hs).mul(t))
    }

    /// `e(g2, g1) * s` through the fixed-base table.
    pub(crate) fn cache_mul(&self, s: &Scalar) -> Gt {
        self.tables().1.mul(s)
    }

    pub fn has_signature_slot(&self) -> bool {
        self.h_s.is_some()
    }

    /// Cached `e(g2, g1)`.
    pub fn pairing_cache(&self) -> &Gt {
        &self.pairing_cache
    }

    /// A uniformly random GT element, suitable as a key-encapsulation seed.
    pub fn random_gt<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Gt {
        self.cache_mul(&Scalar::random(rng))
    }

    pub(crate) fn check_len(&self, pattern: &Pattern) -> Result<()> {
        if pattern.len() != self.len() {
            return Err(Error::InvalidLength("pattern length differs from the system"));
        }
        Ok(())
    }

    /// `g3 * prod_{fixed} h_i^{a_i}`.
    pub(crate) fn q_of(&self, pattern: &Pattern) -> G1 {
        pattern.fixed().fold(self.g3, |acc, (i, a)| acc + &self.h[i] * a)
    }

    /// Derives a key for `target` from the master key or from a key whose
    /// pattern matches `target`. The result is distributed identically
    /// whichever parent was used.
    pub fn key_der<'a, R: RngCore + CryptoRng>(
        &self,
        parent: impl Into<KeyRef<'a>>,
        target: &Pattern,
        rng: &mut R,
    ) -> Result<SecretKey> {
        self.key_der_keeping(parent.into(), target, Keep::ALL, rng)
    }

    pub(crate) fn key_der_keeping<R: RngCore + CryptoRng>(
        &self,
        parent: KeyRef<'_>,
        target: &Pattern,
        keep: Keep<'_>,
        rng: &mut R,
    ) -> Result<SecretKey> {
        self.check_len(target)?;
        let q = self.q_of(target);
        self.key_der_with_q(parent, target, &q, keep, rng)
    }

    /// Derivation with `Q` for `target` supplied by the caller, who must
    /// guarantee it equals `q_of(target)`.
    pub(crate) fn key_der_with_q<R: RngCore + CryptoRng>(
        &self,
        parent: KeyRef<'_>,
        target: &Pattern,
        q: &G1,
        keep: Keep<'_>,
        rng: &mut R,
    ) -> Result<SecretKey> {
        let t = Scalar::random(rng);
        let q = *q;
        let key = match parent {
            KeyRef::Master(msk) => {
                let free_elems =
                    target.free_slots().filter(|&j| keep.slot(j)).map(|j| (j, self.h_mul(j, &t))).collect();
                let sig_elem = if keep.signature { self.hs_mul(&t) } else { None };
                SecretKey {
                    k0: msk.0 + q * t,
                    k1: self.g_mul(&t),
                    free_elems,
                    sig_elem,
                    pattern: target.clone(),
                    delegable: true,
                }
            }
            KeyRef::Secret(key) => {
                let mut k0 = key.k0 + q * t;
                k0 += fix_new_slots(key, target)?;
                let free_elems = target
                    .free_slots()
                    .filter(|&j| keep.slot(j))
                    .filter_map(|j| key.free_elems.get(&j).map(|b| (j, self.h_mul(j, &t) + *b)))
                    .collect();
                let sig_elem = match (keep.signature, self.hs_mul(&t), key.sig_elem) {
                    (true, Some(hs), Some(bs)) => Some(hs + bs),
                    _ => None,
                };
                SecretKey {
                    k0,
                    k1: key.k1 + self.g_mul(&t),
                    free_elems,
                    sig_elem,
                    pattern: target.clone(),
                    delegable: true,
                }
            }
        };
        metrics::bump(Counter::KeyDer);
        Ok(key)
    }

    /// Encrypts `m` under `pattern`; free slots are allowed.
    pub fn encrypt<R: RngCore + CryptoRng>(&self, pattern: &Pattern, m: &Gt, rng: &mut R) -> Result<WkdCiphertext> {
        self.check_len(pattern)?;
        let s = Scalar::random(rng);
        let q = self.q_of(pattern);
        metrics::bump(Counter::WkdEncrypt);
        Ok(self.encrypt_with(&q, pattern.digest(), m, s))
    }

    pub(crate) fn encrypt_with(&self, q: &G1, pattern_digest: [u8; 32], m: &Gt, s: Scalar) -> WkdCiphertext {
        WkdCiphertext { x: self.cache_mul(&s) + *m, y: self.g_mul(&s), z: q * &s, pattern_digest }
    }

    /// Pairing-based well-formedness check of a key against its pattern:
    /// `e(k0, g) = e(g2, g1) * e(Q, k1)` and `e(b_j, g) = e(h_j, k1)` for
    /// every stored element.
    pub fn check_key(&self, key: &SecretKey) -> bool {
        if key.pattern.len() != self.len() {
            return false;
        }
        if key.free_elems.keys().any(|&j| !key.pattern.is_free(j)) {
            return false;
        }
        if key.sig_elem.is_some() && self.h_s.is_none() {
            return false;
        }
        let q = self.q_of(&key.pattern);
        if multi_pair(&[(key.k0, self.g), (-q, key.k1)]) != self.pairing_cache {
            return false;
        }
        let elems = key
            .free_elems
            .iter()
            .map(|(&j, b)| (self.h[j], *b))
            .chain(key.sig_elem.map(|bs| (self.h_s.expect("checked above"), bs)));
        for (h, b) in elems {
            if !multi_pair(&[(b, self.g), (-h, key.k1)]).is_identity() {
                return false;
            }
        }
        true
    }
}

/// `prod b_i^{a_i}` over slots fixed in `target` but free in `key`'s pattern.
pub(crate) fn fix_new_slots(key: &SecretKey, target: &Pattern) -> Result<G1> {
    if !key.pattern.matches(target) {
        return Err(Error::NotAMatch);
    }
    let mut acc = G1::identity();
    for (i, a) in target.fixed() {
        if key.pattern.is_free(i) {
            let b = key.free_elems.get(&i).ok_or(Error::NotExtendable(i))?;
            acc += b * a;
        }
    }
    Ok(acc)
}

/// Decrypts a ciphertext encrypted under exactly the key's pattern.
/// Costs two pairings.
pub fn decrypt(key: &SecretKey, ct: &WkdCiphertext) -> Result<Gt> {
    if key.pattern.digest() != ct.pattern_digest {
        return Err(Error::PatternMismatch);
    }
    metrics::bump(Counter::WkdDecrypt);
    Ok(ct.x + multi_pair(&[(ct.z, key.k1), (-key.k0, ct.y)]))
}

/// Decrypts any ciphertext with the master key. One pairing.
pub fn decrypt_with_master(master: &MasterKey, ct: &WkdCiphertext) -> Gt {
    metrics::bump(Counter::WkdDecrypt);
    ct.x + multi_pair(&[(-master.0, ct.y)])
}

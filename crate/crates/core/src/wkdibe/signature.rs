//! Anonymous signatures.
//!
//! A signature on `m` under pattern `S` is the first two elements of a key
//! for `S` with the dedicated signature slot fixed to `m`. Because derived
//! keys are history independent, a signature reveals nothing about which
//! key (or delegation chain) produced it.

use alloc::collections::BTreeMap;

use rand_core::{CryptoRng, RngCore};

use super::{fix_new_slots, Params, Pattern, Precomputed, SecretKey};
use crate::error::{Error, Result};
use crate::groups::{multi_pair, Scalar, G1, G2};
use crate::metrics::{self, Counter};

/// `(s0, s1)`: 48 + 96 bytes compressed.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Signature {
    pub(crate) s0: G1,
    pub(crate) s1: G2,
}

impl Params {
    fn sig_parts(&self, key: &SecretKey) -> Result<(G1, G1)> {
        match (self.h_s, key.sig_elem) {
            (Some(hs), Some(bs)) => Ok((hs, bs)),
            _ => Err(Error::NoSignatureSlot),
        }
    }

    fn sign_inner(&self, key: &SecretKey, q: &G1, extra: G1, m: &Scalar, t: Scalar) -> Result<Signature> {
        let (hs, bs) = self.sig_parts(key)?;
        metrics::bump(Counter::Sign);
        Ok(Signature { s0: key.k0 + (*q + hs * *m) * t + bs * *m + extra, s1: self.g_mul(&t) + key.k1 })
    }

    /// Signs `m` under the key's own pattern.
    pub fn sign<R: RngCore + CryptoRng>(&self, key: &SecretKey, m: &Scalar, rng: &mut R) -> Result<Signature> {
        self.sig_parts(key)?;
        let t = Scalar::random(rng);
        let q = self.q_of(&key.pattern);
        self.sign_inner(key, &q, G1::identity(), m, t)
    }

    /// Signs `m` under `target`, which the key's pattern must match, without
    /// materialising the derived key.
    pub fn generalized_sign<R: RngCore + CryptoRng>(
        &self,
        key: &SecretKey,
        target: &Pattern,
        m: &Scalar,
        rng: &mut R,
    ) -> Result<Signature> {
        self.check_len(target)?;
        self.sig_parts(key)?;
        let extra = fix_new_slots(key, target)?;
        let t = Scalar::random(rng);
        let q = self.q_of(target);
        self.sign_inner(key, &q, extra, m, t)
    }

    /// Signing from a precomputed `Q_S` for the key's pattern.
    pub fn sign_prepared<R: RngCore + CryptoRng>(
        &self,
        key: &SecretKey,
        qs: &Precomputed,
        m: &Scalar,
        rng: &mut R,
    ) -> Result<Signature> {
        if qs.pattern != key.pattern {
            return Err(Error::PatternMismatch);
        }
        self.sig_parts(key)?;
        let t = Scalar::random(rng);
        self.sign_inner(key, &qs.q, G1::identity(), m, t)
    }

    /// Checks `e(s0, g) = e(g2, g1) * e(g3 * h_s^m * prod h_i^{a_i}, s1)`.
    /// Uses the cached `e(g2, g1)`, so two pairings.
    pub fn verify(&self, pattern: &Pattern, sig: &Signature, m: &Scalar) -> bool {
        let Some(hs) = self.h_s else { return false };
        if pattern.len() != self.len() {
            return false;
        }
        metrics::bump(Counter::Verify);
        let q = self.q_of(pattern) + hs * *m;
        multi_pair(&[(sig.s0, self.g), (-q, sig.s1)]) == self.pairing_cache
    }

    /// The deterministic half of key derivation: fixes the new slots using
    /// the parent's elements without re-randomizing. The result decrypts and
    /// signs correctly but is correlated with its parent, so it is flagged
    /// non-delegable.
    pub fn non_delegable_key_der(&self, key: &SecretKey, target: &Pattern) -> Result<SecretKey> {
        self.check_len(target)?;
        let extra = fix_new_slots(key, target)?;
        let free_elems = target.free_slots().filter_map(|j| key.free_elems.get(&j).map(|b| (j, *b))).collect();
        Ok(SecretKey {
            k0: key.k0 + extra,
            k1: key.k1,
            free_elems,
            sig_elem: key.sig_elem,
            pattern: target.clone(),
            delegable: false,
        })
    }

    /// The randomizing half of key derivation.
    pub fn resample_key<R: RngCore + CryptoRng>(&self, key: &SecretKey, rng: &mut R) -> SecretKey {
        let t = Scalar::random(rng);
        let q = self.q_of(&key.pattern);
        let free_elems: BTreeMap<usize, G1> =
            key.free_elems.iter().map(|(&j, b)| (j, self.h_mul(j, &t) + *b)).collect();
        let sig_elem = match (self.hs_mul(&t), key.sig_elem) {
            (Some(hs), Some(bs)) => Some(hs + bs),
            _ => None,
        };
        SecretKey {
            k0: key.k0 + q * t,
            k1: self.g_mul(&t) + key.k1,
            free_elems,
            sig_elem,
            pattern: key.pattern.clone(),
            delegable: true,
        }
    }

    /// Moves a `non_delegable_key_der(parent, S)` result to pattern `target`,
    /// touching only the slots in which `S` and `target` differ. Equal to
    /// `non_delegable_key_der(parent, target)`.
    pub fn adjust_non_delegable(&self, parent: &SecretKey, child: &SecretKey, target: &Pattern) -> Result<SecretKey> {
        self.check_len(target)?;
        if !parent.pattern.matches(target) || !parent.pattern.matches(&child.pattern) {
            return Err(Error::NotAMatch);
        }
        let mut k0 = child.k0;
        for (i, (old, new)) in child.pattern.slots().iter().zip(target.slots()).enumerate() {
            let delta = match (old, new) {
                (None, Some(b)) => *b,
                (Some(a), None) => -*a,
                (Some(a), Some(b)) if a != b => *b - *a,
                _ => continue,
            };
            let b = parent.free_elems.get(&i).ok_or(Error::NotExtendable(i))?;
            k0 += b * &delta;
        }
        let free_elems = target.free_slots().filter_map(|j| parent.free_elems.get(&j).map(|b| (j, *b))).collect();
        Ok(SecretKey {
            k0,
            k1: child.k1,
            free_elems,
            sig_elem: parent.sig_elem,
            pattern: target.clone(),
            delegable: false,
        })
    }
}

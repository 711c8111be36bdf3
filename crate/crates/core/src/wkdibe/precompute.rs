use rand_core::{CryptoRng, RngCore};

use super::{Params, Pattern, WkdCiphertext};
use crate::error::Result;
use crate::groups::{Gt, Scalar, G1};
use crate::metrics::{self, Counter};

/// Cached `Q_S = g3 * prod_{fixed(S)} h_i^{a_i}` for a pattern `S`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Precomputed {
    pub(crate) q: G1,
    pub(crate) pattern: Pattern,
}

impl Precomputed {
    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn value(&self) -> &G1 {
        &self.q
    }
}

impl Params {
    pub fn precompute(&self, pattern: &Pattern) -> Result<Precomputed> {
        self.check_len(pattern)?;
        metrics::bump(Counter::Precompute);
        Ok(Precomputed { q: self.q_of(pattern), pattern: pattern.clone() })
    }

    /// Moves a precomputed value to `target` with one G1 exponentiation per
    /// slot in which the two patterns differ.
    pub fn adjust_precomputed(&self, qs: &Precomputed, target: &Pattern) -> Result<Precomputed> {
        self.check_len(target)?;
        metrics::bump(Counter::Adjust);
        let mut q = qs.q;
        for (i, (old, new)) in qs.pattern.slots().iter().zip(target.slots()).enumerate() {
            let delta = match (old, new) {
                (None, Some(b)) => *b,
                (Some(a), None) => -*a,
                (Some(a), Some(b)) if a != b => *b - *a,
                _ => continue,
            };
            q += self.h[i] * delta;
        }
        Ok(Precomputed { q, pattern: target.clone() })
    }

    /// Encryption from a precomputed `Q_S`; identical output to
    /// [`Params::encrypt`] for the same randomness.
    pub fn encrypt_prepared<R: RngCore + CryptoRng>(&self, qs: &Precomputed, m: &Gt, rng: &mut R) -> WkdCiphertext {
        let s = Scalar::random(rng);
        metrics::bump(Counter::WkdEncrypt);
        self.encrypt_with(&qs.q, qs.pattern.digest(), m, s)
    }
}

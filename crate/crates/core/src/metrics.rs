//! Operation counters.
//!
//! Every pairing, group exponentiation and WKD-IBE level operation bumps a
//! counter here. With the `std` feature the counters are per thread, so a
//! caller can take a [`snapshot`] before and after a code path and attribute
//! the difference to that path even while other threads are busy. Without
//! `std` a single set of global atomics is used.

use core::ops::{Add, Sub};

#[derive(Clone, Copy, Debug)]
#[repr(usize)]
pub(crate) enum Counter {
    Pairing = 0,
    G1Mul,
    G2Mul,
    GtMul,
    KeyDer,
    WkdEncrypt,
    WkdDecrypt,
    Precompute,
    Adjust,
    Sign,
    Verify,
    AeadSeal,
    AeadOpen,
    CacheHit,
}

const COUNTERS: usize = 14;

/// A point-in-time copy of the counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub pairings: u64,
    pub g1_muls: u64,
    pub g2_muls: u64,
    pub gt_muls: u64,
    pub key_ders: u64,
    pub wkd_encrypts: u64,
    pub wkd_decrypts: u64,
    pub precomputes: u64,
    pub adjusts: u64,
    pub signs: u64,
    pub verifies: u64,
    pub aead_seals: u64,
    pub aead_opens: u64,
    /// Hybrid decryptions served from the wrapped-key cache.
    pub cache_hits: u64,
}

impl OpCounts {
    fn from_raw(raw: [u64; COUNTERS]) -> Self {
        OpCounts {
            pairings: raw[Counter::Pairing as usize],
            g1_muls: raw[Counter::G1Mul as usize],
            g2_muls: raw[Counter::G2Mul as usize],
            gt_muls: raw[Counter::GtMul as usize],
            key_ders: raw[Counter::KeyDer as usize],
            wkd_encrypts: raw[Counter::WkdEncrypt as usize],
            wkd_decrypts: raw[Counter::WkdDecrypt as usize],
            precomputes: raw[Counter::Precompute as usize],
            adjusts: raw[Counter::Adjust as usize],
            signs: raw[Counter::Sign as usize],
            verifies: raw[Counter::Verify as usize],
            aead_seals: raw[Counter::AeadSeal as usize],
            aead_opens: raw[Counter::AeadOpen as usize],
            cache_hits: raw[Counter::CacheHit as usize],
        }
    }

    /// Counts accumulated since `earlier` was taken.
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        *self - *earlier
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            pairings: self.pairings - rhs.pairings,
            g1_muls: self.g1_muls - rhs.g1_muls,
            g2_muls: self.g2_muls - rhs.g2_muls,
            gt_muls: self.gt_muls - rhs.gt_muls,
            key_ders: self.key_ders - rhs.key_ders,
            wkd_encrypts: self.wkd_encrypts - rhs.wkd_encrypts,
            wkd_decrypts: self.wkd_decrypts - rhs.wkd_decrypts,
            precomputes: self.precomputes - rhs.precomputes,
            adjusts: self.adjusts - rhs.adjusts,
            signs: self.signs - rhs.signs,
            verifies: self.verifies - rhs.verifies,
            aead_seals: self.aead_seals - rhs.aead_seals,
            aead_opens: self.aead_opens - rhs.aead_opens,
            cache_hits: self.cache_hits - rhs.cache_hits,
        }
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            pairings: self.pairings + rhs.pairings,
            g1_muls: self.g1_muls + rhs.g1_muls,
            g2_muls: self.g2_muls + rhs.g2_muls,
            gt_muls: self.gt_muls + rhs.gt_muls,
            key_ders: self.key_ders + rhs.key_ders,
            wkd_encrypts: self.wkd_encrypts + rhs.wkd_encrypts,
            wkd_decrypts: self.wkd_decrypts + rhs.wkd_decrypts,
            precomputes: self.precomputes + rhs.precomputes,
            adjusts: self.adjusts + rhs.adjusts,
            signs: self.signs + rhs.signs,
            verifies: self.verifies + rhs.verifies,
            aead_seals: self.aead_seals + rhs.aead_seals,
            aead_opens: self.aead_opens + rhs.aead_opens,
            cache_hits: self.cache_hits + rhs.cache_hits,
        }
    }
}

#[cfg(feature = "std")]
mod imp {
    use super::{Counter, COUNTERS};
    use std::cell::Cell;

    std::thread_local! {
        static COUNTS: [Cell<u64>; COUNTERS] = const { [const { Cell::new(0) }; COUNTERS] };
    }

    pub(super) fn bump(c: Counter, n: u64) {
        COUNTS.with(|counts| {
            let cell = &counts[c as usize];
            cell.set(cell.get() + n);
        });
    }

    pub(super) fn read() -> [u64; COUNTERS] {
        COUNTS.with(|counts| core::array::from_fn(|i| counts[i].get()))
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    use super::{Counter, COUNTERS};
    use core::sync::atomic::{AtomicU64, Ordering};

    static COUNTS: [AtomicU64; COUNTERS] = [const { AtomicU64::new(0) }; COUNTERS];

    pub(super) fn bump(c: Counter, n: u64) {
        COUNTS[c as usize].fetch_add(n, Ordering::Relaxed);
    }

    pub(super) fn read() -> [u64; COUNTERS] {
        core::array::from_fn(|i| COUNTS[i].load(Ordering::Relaxed))
    }
}

#[inline]
pub(crate) fn bump(c: Counter) {
    imp::bump(c, 1);
}

#[inline]
pub(crate) fn bump_by(c: Counter, n: u64) {
    imp::bump(c, n);
}

/// Current counter values for the calling thread (or process, without `std`).
pub fn snapshot() -> OpCounts {
    OpCounts::from_raw(imp::read())
}

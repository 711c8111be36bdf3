//! Microbenchmarks of the core operations, emitted as CSV.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use jedi_core::revocation::{derive_range_bundle, BundleParent, LeafRange, RevocationTree};
use jedi_core::wkdibe::{decrypt, setup};
use jedi_core::{Pattern, Scalar};
use rand::{CryptoRng, RngCore};

use crate::error::Result;

/// The `pct`-th percentile of `samples` by nearest rank; zero if empty.
pub fn percentile(samples: &[Duration], pct: usize) -> Duration {
    if samples.is_empty() {
        return Duration::ZERO;
    }
    let mut sorted = samples.to_vec();
    sorted.sort();
    let rank = (samples.len() * pct).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Mean and 95th percentile of `samples`; zero if empty.
pub fn summarize(samples: &[Duration]) -> (Duration, Duration) {
    if samples.is_empty() {
        return (Duration::ZERO, Duration::ZERO);
    }
    let mean = samples.iter().sum::<Duration>() / samples.len() as u32;
    (mean, percentile(samples, 95))
}

fn time(op: &mut impl FnMut()) -> Duration {
    let t = Instant::now();
    op();
    t.elapsed()
}

/// Runs `op` `iterations` times and returns each run's latency, after one
/// untimed warm-up run.
pub fn measure(iterations: usize, mut op: impl FnMut()) -> Vec<Duration> {
    op();
    (0..iterations).map(|_| time(&mut op)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub operation: String,
    pub slots: usize,
    pub mean: Duration,
    pub p95: Duration,
    /// Not part of the CSV; steadier than the mean under scheduler noise.
    pub median: Duration,
}

impl BenchRow {
    pub fn from_samples(operation: &str, slots: usize, samples: &[Duration]) -> Self {
        let (mean, p95) = summarize(samples);
        BenchRow { operation: operation.into(), slots, mean, p95, median: percentile(samples, 50) }
    }
}

pub const CSV_HEADER: &str = "operation,slots,mean-latency,p95";

/// Latencies are in milliseconds.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4}",
            r.operation,
            r.slots,
            r.mean.as_secs_f64() * 1e3,
            r.p95.as_secs_f64() * 1e3
        );
    }
    out
}

fn full_pattern<R: RngCore + CryptoRng>(slots: usize, rng: &mut R) -> Pattern {
    Pattern::from_slots((0..slots).map(|_| Some(Scalar::random(rng))).collect()).expect("non-empty")
}

/// Key derivation, encryption, decryption, signing and verification with
/// every one of `slots` slots fixed, plus encryption from scratch versus
/// from a value adjusted in one slot (what a publisher does at an hour
/// boundary).
pub fn bench_wkdibe<R: RngCore + CryptoRng>(slots: usize, iterations: usize, rng: &mut R) -> Result<Vec<BenchRow>> {
    let (params, master) = setup(slots, true, rng)?;
    let pattern = full_pattern(slots, rng);
    let mut next = pattern.clone();
    next.set(slots - 1, Some(Scalar::random(rng)))?;
    let key = params.key_der(&master, &pattern, rng)?;
    let m = params.random_gt(rng);
    let ct = params.encrypt(&pattern, &m, rng)?;
    let msg = Scalar::random(rng);
    let sig = params.sign(&key, &msg, rng)?;
    let prev = params.precompute(&pattern)?;

    let mut rows = Vec::new();
    let mut row =
        |operation: &str, samples: Vec<Duration>| rows.push(BenchRow::from_samples(operation, slots, &samples));
    row(
        "key_der",
        measure(iterations, || {
            black_box(params.key_der(&master, &pattern, rng).expect("valid inputs"));
        }),
    );
    row(
        "encrypt",
        measure(iterations, || {
            black_box(params.encrypt(&pattern, &m, rng).expect("valid inputs"));
        }),
    );
    row(
        "decrypt",
        measure(iterations, || {
            black_box(decrypt(&key, &ct).expect("valid inputs"));
        }),
    );
    row(
        "sign",
        measure(iterations, || {
            black_box(params.sign(&key, &msg, rng).expect("valid inputs"));
        }),
    );
    row("verify", measure(iterations, || assert!(params.verify(&pattern, &sig, &msg))));
    row(
        "precompute+encrypt",
        measure(iterations, || {
            let p = params.precompute(&next).expect("valid pattern");
            black_box(params.encrypt_prepared(&p, &m, rng));
        }),
    );
    row(
        "adjust+encrypt",
        measure(iterations, || {
            let p = params.adjust_precomputed(&prev, &next).expect("valid pattern");
            black_box(params.encrypt_prepared(&p, &m, rng));
        }),
    );
    Ok(rows)
}

/// Deriving a range bundle for leaves `1..=k` from the master key, over a
/// tree of height `height`. The `slots` column holds `k`.
///
/// Each round times every `k` once, so a burst of load on the machine
/// lands on all rows alike instead of on whichever `k` ran during it.
pub fn bench_range_bundle<R: RngCore + CryptoRng>(
    height: u8,
    ks: &[u32],
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<BenchRow>> {
    const FIXED: usize = 4;
    let (params, master) = setup(FIXED + height as usize, true, rng)?;
    let tree = RevocationTree::new(FIXED, height)?;
    let mut base = full_pattern(FIXED + height as usize, rng);
    for s in tree.slots() {
        base.set(s, None)?;
    }
    let ranges = ks.iter().map(|&k| LeafRange::new(1, k)).collect::<core::result::Result<Vec<_>, _>>()?;
    let mut derive = |range: LeafRange| {
        black_box(
            derive_range_bundle(&params, &tree, BundleParent::Master(&master), &base, range, rng)
                .expect("range within tree"),
        );
    };
    let mut samples = vec![Vec::with_capacity(iterations); ranges.len()];
    for round in 0..=iterations {
        for (range, out) in ranges.iter().zip(&mut samples) {
            let t = time(&mut || derive(*range));
            // Round zero warms up.
            if round > 0 {
                out.push(t);
            }
        }
    }
    Ok(ks.iter().zip(&samples).map(|(&k, s)| BenchRow::from_samples("derive_range_bundle", k as usize, s)).collect())
}

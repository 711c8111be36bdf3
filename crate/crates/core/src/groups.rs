//! BLS12-381 bilinear group backend.
//!
//! Thin newtypes over the arkworks implementation. Group operations are
//! written additively (`+`, `-`, `* Scalar`) as in the backend; the
//! multiplicative notation of pairing literature maps onto it one-to-one.
//! Every scalar multiplication and pairing is recorded in [`crate::metrics`].

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::{BigInteger, Field, One, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize, Compress, Validate};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{self, Counter};

pub const SCALAR_BYTES: usize = 32;
pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;
pub const GT_BYTES: usize = 576;

/// Domain byte for [`hash_to_scalar`]; bumped on the (negligible) chance of a zero digest.
const HASH_TO_SCALAR_DOMAIN: u8 = 0x01;

/// An element of the scalar field Z_p.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn one() -> Self {
        Scalar(Fr::one())
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    /// Uniform element of Z_p^*.
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Fr::rand(rng);
            if !s.is_zero() {
                return Scalar(s);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.inverse().map(Scalar)
    }

    /// Canonical 32-byte big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let be = self.0.into_bigint().to_bytes_be();
        let mut out = [0u8; SCALAR_BYTES];
        out[SCALAR_BYTES - be.len()..].copy_from_slice(&be);
        out
    }

    /// Rejects encodings that are not reduced mod p.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SCALAR_BYTES {
            return Err(Error::MalformedEncoding("scalar length"));
        }
        let s = Fr::from_be_bytes_mod_order(bytes);
        let scalar = Scalar(s);
        if scalar.to_bytes()[..] != bytes[..] {
            return Err(Error::MalformedEncoding("scalar not reduced"));
        }
        Ok(scalar)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(")?;
        for b in self.to_bytes() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

/// Hashes arbitrary bytes to a nonzero scalar.
///
/// SHA-256 over `domain || input`, read as a big-endian integer and reduced
/// mod p. The domain starts at 0x01 and is incremented if the result is zero.
pub fn hash_to_scalar(input: &[u8]) -> Scalar {
    let mut domain = HASH_TO_SCALAR_DOMAIN;
    loop {
        let digest = Sha256::new().chain_update([domain]).chain_update(input).finalize();
        let s = Fr::from_be_bytes_mod_order(&digest);
        if !s.is_zero() {
            return Scalar(s);
        }
        domain = domain.wrapping_add(1);
    }
}

macro_rules! source_group {
    ($name:ident, $proj:ty, $affine:ty, $bytes:expr, $counter:expr, $label:literal) => {
        #[doc = concat!("An element of ", $label, ".")]
        #[derive(Clone, Copy, PartialEq, Eq)]
        pub struct $name(pub(crate) $proj);

        impl $name {
            pub const BYTES: usize = $bytes;

            pub fn generator() -> Self {
                $name(<$proj>::generator())
            }

            pub fn identity() -> Self {
                $name(<$proj>::zero())
            }

            pub fn is_identity(&self) -> bool {
                self.0.is_zero()
            }

            /// Uniformly random element.
            pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
                $name(<$proj>::rand(rng))
            }

            /// Compressed canonical encoding.
            pub fn to_bytes(&self) -> [u8; $bytes] {
                let mut out = [0u8; $bytes];
                self.0.into_affine().serialize_compressed(&mut out[..]).expect("buffer sized for compressed point");
                out
            }

            /// Decodes a compressed point, rejecting off-curve, non-canonical
            /// and out-of-subgroup encodings.
            pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
                if bytes.len() != $bytes {
                    return Err(Error::MalformedEncoding(concat!($label, " length")));
                }
                let p = <$affine>::deserialize_with_mode(bytes, Compress::Yes, Validate::Yes)
                    .map_err(|_| Error::MalformedEncoding(concat!($label, " encoding")))?;
                let out = $name(p.into());
                // reject alternate encodings of the same point
                if out.to_bytes()[..] != bytes[..] {
                    return Err(Error::MalformedEncoding(concat!($label, " not canonical")));
                }
                Ok(out)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let bytes = self.to_bytes();
                write!(f, concat!(stringify!($name), "("))?;
                for b in &bytes[..8] {
                    write!(f, "{b:02x}")?;
                }
                write!(f, "..)")
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<Scalar> for $name {
            type Output = $name;
            fn mul(self, rhs: Scalar) -> $name {
                metrics::bump($counter);
                $name(self.0 * rhs.0)
            }
        }

        impl Mul<&Scalar> for &$name {
            type Output = $name;
            fn mul(self, rhs: &Scalar) -> $name {
                metrics::bump($counter);
                $name(self.0 * rhs.0)
            }
        }
    };
}

source_group!(G1, G1Projective, G1Affine, G1_BYTES, Counter::G1Mul, "G1");
source_group!(G2, G2Projective, G2Affine, G2_BYTES, Counter::G2Mul, "G2");

/// An element of the target group G_T.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Gt(pub(crate) PairingOutput<Bls12_381>);

impl Gt {
    pub const BYTES: usize = GT_BYTES;

    pub fn identity() -> Self {
        Gt(PairingOutput::zero())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }

    /// Canonical 576-byte encoding (the full F_p12 element).
    pub fn to_bytes(&self) -> [u8; GT_BYTES] {
        let mut out = [0u8; GT_BYTES];
        self.0.serialize_compressed(&mut out[..]).expect("buffer sized for GT element");
        out
    }

    /// Decodes and checks membership in the order-p subgroup.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != GT_BYTES {
            return Err(Error::MalformedEncoding("GT length"));
        }
        let v = PairingOutput::<Bls12_381>::deserialize_with_mode(bytes, Compress::Yes, Validate::Yes)
            .map_err(|_| Error::MalformedEncoding("GT encoding"))?;
        let out = Gt(v);
        if out.to_bytes()[..] != bytes[..] {
            return Err(Error::MalformedEncoding("GT not canonical"));
        }
        Ok(out)
    }
}

impl fmt::Debug for Gt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.to_bytes();
        write!(f, "Gt(")?;
        for b in &bytes[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

impl Add for Gt {
    type Output = Gt;
    fn add(self, rhs: Gt) -> Gt {
        Gt(self.0 + rhs.0)
    }
}

impl Sub for Gt {
    type Output = Gt;
    fn sub(self, rhs: Gt) -> Gt {
        Gt(self.0 - rhs.0)
    }
}

impl Neg for Gt {
    type Output = Gt;
    fn neg(self) -> Gt {
        Gt(-self.0)
    }
}

impl Mul<Scalar> for Gt {
    type Output = Gt;
    fn mul(self, rhs: Scalar) -> Gt {
        metrics::bump(Counter::GtMul);
        Gt(self.0 * rhs.0)
    }
}

const COMB_ROWS: usize = 64;

/// Nibble `i` of a scalar, least significant first.
fn nibble(bytes: &[u8; SCALAR_BYTES], i: usize) -> usize {
    let b = bytes[SCALAR_BYTES - 1 - i / 2];
    (if i & 1 == 0 { b & 0x0f } else { b >> 4 }) as usize
}

/// Comb table for one fixed G2 base: row `i` holds `j * 16^i * base`, so a
/// multiplication is at most 64 mixed additions.
pub(crate) struct G2Table(Vec<[G2Affine; 16]>);

impl G2Table {
    pub(crate) fn new(base: &G2) -> Self {
        let mut rows = Vec::with_capacity(COMB_ROWS);
        let mut b = base.0;
        for _ in 0..COMB_ROWS {
            let mut row = [G2Projective::zero(); 16];
            for j in 1..16 {
                row[j] = row[j - 1] + b;
            }
            b = row[15] + b;
            let affine = G2Projective::normalize_batch(&row);
            rows.push(core::array::from_fn(|j| affine[j]));
        }
        G2Table(rows)
    }

    pub(crate) fn mul(&self, s: &Scalar) -> G2 {
        metrics::bump(Counter::G2Mul);
        let bytes = s.to_bytes();
        let mut acc = G2Projective::zero();
        for (i, row) in self.0.iter().enumerate() {
            let n = nibble(&bytes, i);
            if n != 0 {
                acc += row[n].into_group();
            }
        }
        G2(acc)
    }
}

/// Comb table for one fixed G1 base, as [`G2Table`].
pub(crate) struct G1Table(Vec<[G1Affine; 16]>);

impl G1Table {
    pub(crate) fn new(base: &G1) -> Self {
        let mut rows = Vec::with_capacity(COMB_ROWS);
        let mut b = base.0;
        for _ in 0..COMB_ROWS {
            let mut row = [G1Projective::zero(); 16];
            for j in 1..16 {
                row[j] = row[j - 1] + b;
            }
            b = row[15] + b;
            let affine = G1Projective::normalize_batch(&row);
            rows.push(core::array::from_fn(|j| affine[j]));
        }
        G1Table(rows)
    }

    pub(crate) fn mul(&self, s: &Scalar) -> G1 {
        metrics::bump(Counter::G1Mul);
        let bytes = s.to_bytes();
        let mut acc = G1Projective::zero();
        for (i, row) in self.0.iter().enumerate() {
            let n = nibble(&bytes, i);
            if n != 0 {
                acc += row[n].into_group();
            }
        }
        G1(acc)
    }
}

/// Comb table for one fixed GT base, as [`G2Table`].
pub(crate) struct GtTable(Vec<[PairingOutput<Bls12_381>; 16]>);

impl GtTable {
    pub(crate) fn new(base: &Gt) -> Self {
        let mut rows = Vec::with_capacity(COMB_ROWS);
        let mut b = base.0;
        for _ in 0..COMB_ROWS {
            let mut row = [PairingOutput::zero(); 16];
            for j in 1..16 {
                row[j] = row[j - 1] + b;
            }
            b = row[15] + b;
            rows.push(row);
        }
        GtTable(rows)
    }

    pub(crate) fn mul(&self, s: &Scalar) -> Gt {
        metrics::bump(Counter::GtMul);
        let bytes = s.to_bytes();
        let mut acc = PairingOutput::zero();
        for (i, row) in self.0.iter().enumerate() {
            let n = nibble(&bytes, i);
            if n != 0 {
                acc += row[n];
            }
        }
        Gt(acc)
    }
}

/// The bilinear map e: G1 x G2 -> GT.
pub fn pair(a: &G1, b: &G2) -> Gt {
    metrics::bump(Counter::Pairing);
    Gt(Bls12_381::pairing(a.0, b.0))
}

/// Product of pairings sharing one final exponentiation. Counts as
/// `terms.len()` pairings.
pub fn multi_pair(terms: &[(G1, G2)]) -> Gt {
    metrics::bump_by(Counter::Pairing, terms.len() as u64);
    let (a, b): (alloc::vec::Vec<_>, alloc::vec::Vec<_>) =
        terms.iter().map(|(a, b)| (a.0.into_affine(), b.0.into_affine())).unzip();
    Gt(Bls12_381::multi_pairing(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn encoded_sizes() {
        let mut rng = rng();
        assert_eq!(G1::random(&mut rng).to_bytes().len(), 48);
        assert_eq!(G2::random(&mut rng).to_bytes().len(), 96);
        let gt = pair(&G1::random(&mut rng), &G2::random(&mut rng));
        assert_eq!(gt.to_bytes().len(), 576);
    }

    #[test]
    fn comb_tables_match_plain_multiplication() {
        let mut rng = rng();
        let (a, b) = (G1::random(&mut rng), G2::random(&mut rng));
        let (ta, tb) = (G1Table::new(&a), G2Table::new(&b));
        let gt = pair(&a, &b);
        let tg = GtTable::new(&gt);
        let edge = [Scalar::zero(), Scalar::one(), -Scalar::one()];
        for s in edge.into_iter().chain((0..20).map(|_| Scalar::random(&mut rng))) {
            assert_eq!(ta.mul(&s), a * s);
            assert_eq!(tb.mul(&s), b * s);
            assert_eq!(tg.mul(&s), gt * s);
        }
    }

    #[test]
    fn g1_generator_uses_standard_compressed_form() {
        assert_eq!(
            hex::encode(G1::generator().to_bytes()),
            "97f1d3a73197d7942695638c4fa9ac0fc3688c4f9774b905a14e3a3f171bac586c55e83ff97a1aeffb3af00adb22c6bb"
        );
        let mut inf = [0u8; 48];
        inf[0] = 0xc0;
        assert_eq!(G1::identity().to_bytes(), inf);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert_eq!(G1::from_bytes(&[0u8; 49]), Err(Error::MalformedEncoding("G1 length")));
        assert!(G2::from_bytes(&[0u8; 95]).is_err());
        assert!(Gt::from_bytes(&[0u8; 575]).is_err());
        assert!(Scalar::from_bytes(&[0u8; 31]).is_err());
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(G1::from_bytes(&[0xffu8; 48]).is_err());
        assert!(G2::from_bytes(&[0x8fu8; 96]).is_err());
        // all-zero is not a valid GT element (not even in F_p12^*)
        assert!(Gt::from_bytes(&[0u8; 576]).is_err());
        assert!(Scalar::from_bytes(&[0xffu8; 32]).is_err());
    }

    #[test]
    fn gt_outside_subgroup_is_rejected() {
        // 2 as an F_p12 element is not in the order-p subgroup
        let mut bytes = Gt::identity().to_bytes();
        assert_eq!(bytes[0], 1);
        bytes[0] = 2;
        assert!(Gt::from_bytes(&bytes).is_err());
    }

    #[test]
    fn pairing_identity_case() {
        let mut rng = rng();
        assert!(pair(&G1::identity(), &G2::random(&mut rng)).is_identity());
        assert!(pair(&G1::random(&mut rng), &G2::identity()).is_identity());
    }

    #[test]
    fn pairing_of_square() {
        let g1 = G1::generator();
        let g2 = G2::generator();
        let two = Scalar::from_u64(2);
        assert_eq!(pair(&(g1 * two), &g2), pair(&g1, &g2) * two);
    }

    #[test]
    fn multi_pair_matches_product() {
        let mut rng = rng();
        let terms = [(G1::random(&mut rng), G2::random(&mut rng)), (G1::random(&mut rng), G2::random(&mut rng))];
        let before = metrics::snapshot();
        let m = multi_pair(&terms);
        assert_eq!(metrics::snapshot().since(&before).pairings, 2);
        assert_eq!(m, pair(&terms[0].0, &terms[0].1) + pair(&terms[1].0, &terms[1].1));
    }

    #[test]
    fn hash_to_scalar_is_deterministic_and_separating() {
        assert_eq!(hash_to_scalar(b"a"), hash_to_scalar(b"a"));
        assert_ne!(hash_to_scalar(b"a"), hash_to_scalar(b"b"));
    }

    #[test]
    fn scalar_bytes_are_big_endian() {
        let mut expected = [0u8; 32];
        expected[31] = 5;
        assert_eq!(Scalar::from_u64(5).to_bytes(), expected);
        assert_eq!(Scalar::from_bytes(&expected).unwrap(), Scalar::from_u64(5));
    }
}

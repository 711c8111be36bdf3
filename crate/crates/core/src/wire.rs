//! Versioned binary encodings.
//!
//! Every top-level object starts with a version byte and a type tag,
//! followed by big-endian counts and compressed group elements. Embedded
//! objects (patterns inside keys, keys inside key sets) omit the header.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups::{Gt, Scalar, G1, G2};
use crate::wkdibe::{MasterKey, Params, Pattern, SecretKey, Signature, WkdCiphertext};

pub const VERSION: u8 = 1;

/// Type tags for the object header.
pub mod tag {
    pub const PARAMS: u8 = 0x01;
    pub const SECRET_KEY: u8 = 0x02;
    pub const CIPHERTEXT: u8 = 0x03;
    pub const SIGNATURE: u8 = 0x04;
    pub const MASTER_KEY: u8 = 0x05;
    pub const HIERARCHY: u8 = 0x10;
    pub const KEY_SET: u8 = 0x11;
    pub const KEY_STORE: u8 = 0x12;
    pub const MESSAGE: u8 = 0x13;
    pub const EPOCH_HEADER: u8 = 0x14;
    pub const MAC_TAG: u8 = 0x15;
    pub const REVOCATION_LIST: u8 = 0x20;
    pub const REVOCATION_PROOF: u8 = 0x21;
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn with_header(tag: u8) -> Self {
        let mut w = Writer::new();
        w.u8(VERSION);
        w.u8(tag);
        w
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// u32 length prefix followed by the bytes.
    pub fn bytes(&mut self, bytes: &[u8]) {
        self.u32(bytes.len() as u32);
        self.raw(bytes);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn scalar(&mut self, s: &Scalar) {
        self.raw(&s.to_bytes());
    }

    pub fn g1(&mut self, p: &G1) {
        self.raw(&p.to_bytes());
    }

    pub fn g2(&mut self, p: &G2) {
        self.raw(&p.to_bytes());
    }

    pub fn gt(&mut self, p: &Gt) {
        self.raw(&p.to_bytes());
    }

    pub fn pattern(&mut self, p: &Pattern) {
        self.u16(p.len() as u16);
        for slot in p.slots() {
            match slot {
                None => self.u8(0),
                Some(s) => {
                    self.u8(1);
                    self.scalar(s);
                }
            }
        }
    }

    pub fn secret_key(&mut self, k: &SecretKey) -> Result<()> {
        if !k.delegable {
            return Err(Error::NonDelegable);
        }
        self.pattern(&k.pattern);
        self.g1(&k.k0);
        self.g2(&k.k1);
        self.u16(k.free_elems.len() as u16);
        for (&j, b) in &k.free_elems {
            self.u16(j as u16);
            self.g1(b);
        }
        match &k.sig_elem {
            None => self.u8(0),
            Some(b) => {
                self.u8(1);
                self.g1(b);
            }
        }
        Ok(())
    }

    pub fn ciphertext(&mut self, c: &WkdCiphertext) {
        self.raw(&c.pattern_digest);
        self.raw(&c.core_bytes());
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    /// Consumes and checks the version/tag header.
    pub fn with_header(buf: &'a [u8], tag: u8) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.u8()? != VERSION {
            return Err(Error::MalformedEncoding("unsupported version"));
        }
        if r.u8()? != tag {
            return Err(Error::MalformedEncoding("unexpected type tag"));
        }
        Ok(r)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    /// Errors if trailing bytes remain.
    pub fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::MalformedEncoding("trailing bytes"))
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::MalformedEncoding("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::MalformedEncoding("flag byte")),
        }
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_be_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn string(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::MalformedEncoding("utf-8"))
    }

    pub fn scalar(&mut self) -> Result<Scalar> {
        Scalar::from_bytes(self.take(32)?)
    }

    pub fn g1(&mut self) -> Result<G1> {
        G1::from_bytes(self.take(G1::BYTES)?)
    }

    pub fn g2(&mut self) -> Result<G2> {
        G2::from_bytes(self.take(G2::BYTES)?)
    }

    pub fn gt(&mut self) -> Result<Gt> {
        Gt::from_bytes(self.take(Gt::BYTES)?)
    }

    pub fn pattern(&mut self) -> Result<Pattern> {
        let len = self.u16()? as usize;
        let mut slots = Vec::with_capacity(len);
        for _ in 0..len {
            slots.push(if self.bool()? { Some(self.scalar()?) } else { None });
        }
        Pattern::from_slots(slots)
    }

    pub fn secret_key(&mut self) -> Result<SecretKey> {
        let pattern = self.pattern()?;
        let k0 = self.g1()?;
        let k1 = self.g2()?;
        let n = self.u16()? as usize;
        let mut free_elems = BTreeMap::new();
        for _ in 0..n {
            let j = self.u16()? as usize;
            if !pattern.is_free(j) {
                return Err(Error::MalformedEncoding("element for a fixed slot"));
            }
            if free_elems.insert(j, self.g1()?).is_some() {
                return Err(Error::MalformedEncoding("duplicate slot element"));
            }
        }
        let sig_elem = if self.bool()? { Some(self.g1()?) } else { None };
        Ok(SecretKey { k0, k1, free_elems, sig_elem, pattern, delegable: true })
    }

    pub fn ciphertext(&mut self) -> Result<WkdCiphertext> {
        let pattern_digest = self.array()?;
        let x = self.gt()?;
        let y = self.g2()?;
        let z = self.g1()?;
        Ok(WkdCiphertext { x, y, z, pattern_digest })
    }
}

impl Params {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::PARAMS);
        w.u16(self.h.len() as u16);
        w.bool(self.h_s.is_some());
        w.g2(&self.g);
        w.g2(&self.g1);
        w.g1(&self.g2);
        w.g1(&self.g3);
        for h in &self.h {
            w.g1(h);
        }
        if let Some(hs) = &self.h_s {
            w.g1(hs);
        }
        w.finish()
    }

    /// Decodes parameters and recomputes the cached pairing.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::PARAMS)?;
        let len = r.u16()? as usize;
        if len == 0 {
            return Err(Error::MalformedEncoding("zero slots"));
        }
        let has_sig = r.bool()?;
        let g = r.g2()?;
        let g1 = r.g2()?;
        let g2 = r.g1()?;
        let g3 = r.g1()?;
        let h = (0..len).map(|_| r.g1()).collect::<Result<Vec<_>>>()?;
        let h_s = if has_sig { Some(r.g1()?) } else { None };
        r.finish()?;
        let pairing_cache = crate::groups::pair(&g2, &g1);
        Ok(Params { g, g1, g2, g3, h, h_s, pairing_cache, tables: Default::default() })
    }
}

impl MasterKey {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::MASTER_KEY);
        w.g1(&self.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::MASTER_KEY)?;
        let k = r.g1()?;
        r.finish()?;
        Ok(MasterKey(k))
    }
}

impl SecretKey {
    /// Refuses keys produced by `non_delegable_key_der` that were never
    /// resampled.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::with_header(tag::SECRET_KEY);
        w.secret_key(self)?;
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::SECRET_KEY)?;
        let k = r.secret_key()?;
        r.finish()?;
        Ok(k)
    }
}

impl WkdCiphertext {
    /// `X || Y || Z`: 576 + 96 + 48 = 720 bytes.
    pub fn core_bytes(&self) -> [u8; 720] {
        let mut out = [0u8; 720];
        out[..576].copy_from_slice(&self.x.to_bytes());
        out[576..672].copy_from_slice(&self.y.to_bytes());
        out[672..].copy_from_slice(&self.z.to_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::CIPHERTEXT);
        w.ciphertext(self);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::CIPHERTEXT)?;
        let c = r.ciphertext()?;
        r.finish()?;
        Ok(c)
    }
}

impl Signature {
    /// `s0 || s1`: 48 + 96 = 144 bytes.
    pub fn to_bytes(&self) -> [u8; 144] {
        let mut out = [0u8; 144];
        out[..48].copy_from_slice(&self.s0.to_bytes());
        out[48..].copy_from_slice(&self.s1.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 144 {
            return Err(Error::MalformedEncoding("signature length"));
        }
        Ok(Signature { s0: G1::from_bytes(&bytes[..48])?, s1: G2::from_bytes(&bytes[48..])? })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::SIGNATURE);
        w.raw(&self.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::SIGNATURE)?;
        let s = Signature::from_bytes(r.take(144)?)?;
        r.finish()?;
        Ok(s)
    }
}

//! On-disk containers.
//!
//! Every file is `"JEDI"`, a version byte, a kind byte, a `u16` section
//! count and that many sections, each a `u32` big-endian length followed by
//! its bytes. Sections hold the core encodings of the objects.

use std::fs;
use std::io::Write;
use std::path::Path;

use jedi_core::protocol::{EpochIntegrityHeader, Hierarchy, HybridCiphertext, KeySet, KeyStore, MacTag};
use jedi_core::revocation::{RevocationList, RevocationProof};

use crate::error::{io_at, Error, Result};

pub const MAGIC: [u8; 4] = *b"JEDI";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FileKind {
    Params = 1,
    KeySet = 2,
    KeyStore = 3,
    Message = 4,
    RevocationList = 5,
    EpochHeader = 6,
    EpochChain = 7,
}

impl FileKind {
    fn from_byte(b: u8) -> Option<FileKind> {
        use FileKind::*;
        [Params, KeySet, KeyStore, Message, RevocationList, EpochHeader, EpochChain].into_iter().find(|k| *k as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            FileKind::Params => "params",
            FileKind::KeySet => "keyset",
            FileKind::KeyStore => "keystore",
            FileKind::Message => "message",
            FileKind::RevocationList => "revocation list",
            FileKind::EpochHeader => "epoch header",
            FileKind::EpochChain => "epoch chain",
        }
    }

    /// Files holding key material; written owner-only.
    pub fn is_secret(self) -> bool {
        matches!(self, FileKind::KeySet | FileKind::KeyStore | FileKind::EpochChain)
    }
}

fn malformed(what: &str) -> Error {
    Error::MalformedFile(what.to_string())
}

pub fn encode_container(kind: FileKind, sections: &[Vec<u8>]) -> Vec<u8> {
    let total: usize = sections.iter().map(|s| s.len() + 4).sum();
    let mut out = Vec::with_capacity(8 + total);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(sections.len() as u16).to_be_bytes());
    for s in sections {
        out.extend_from_slice(&(s.len() as u32).to_be_bytes());
        out.extend_from_slice(s);
    }
    out
}

/// Splits a container into its kind and sections.
pub fn decode_container(bytes: &[u8]) -> Result<(FileKind, Vec<Vec<u8>>)> {
    if bytes.len() < 8 || bytes[..4] != MAGIC {
        return Err(malformed("not a JEDI file"));
    }
    if bytes[4] != VERSION {
        return Err(Error::MalformedFile(format!("unsupported version {}", bytes[4])));
    }
    let kind =
        FileKind::from_byte(bytes[5]).ok_or_else(|| Error::MalformedFile(format!("unknown kind {}", bytes[5])))?;
    let count = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
    let mut rest = &bytes[8..];
    let mut sections = Vec::with_capacity(count);
    for _ in 0..count {
        if rest.len() < 4 {
            return Err(malformed("truncated section length"));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(malformed("truncated section"));
        }
        sections.push(rest[..len].to_vec());
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return Err(malformed("trailing bytes"));
    }
    Ok((kind, sections))
}

/// An object stored as one container kind.
pub trait FileObject: Sized {
    const KIND: FileKind;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>>;
    fn from_sections(sections: &[Vec<u8>]) -> Result<Self>;

    fn to_file_bytes(&self) -> Result<Vec<u8>> {
        Ok(encode_container(Self::KIND, &self.to_sections()?))
    }

    fn from_file_bytes(bytes: &[u8]) -> Result<Self> {
        let (kind, sections) = decode_container(bytes)?;
        if kind != Self::KIND {
            return Err(Error::MalformedFile(format!(
                "expected a {} file, found a {} file",
                Self::KIND.name(),
                kind.name()
            )));
        }
        Self::from_sections(&sections)
    }
}

fn exactly<const N: usize>(sections: &[Vec<u8>]) -> Result<&[Vec<u8>; N]> {
    sections.try_into().map_err(|_| Error::MalformedFile(format!("expected {N} sections, found {}", sections.len())))
}

impl FileObject for Hierarchy {
    const KIND: FileKind = FileKind::Params;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        Ok(vec![self.encode()])
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let [h] = exactly::<1>(s)?;
        Ok(Hierarchy::decode(h)?)
    }
}

impl FileObject for KeySet {
    const KIND: FileKind = FileKind::KeySet;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        Ok(vec![self.encode()?])
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let [k] = exactly::<1>(s)?;
        Ok(KeySet::decode(k)?)
    }
}

impl FileObject for KeyStore {
    const KIND: FileKind = FileKind::KeyStore;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        Ok(vec![self.encode()?])
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let [k] = exactly::<1>(s)?;
        Ok(KeyStore::decode(k)?)
    }
}

impl FileObject for EpochIntegrityHeader {
    const KIND: FileKind = FileKind::EpochHeader;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        Ok(vec![self.encode()])
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let [h] = exactly::<1>(s)?;
        Ok(EpochIntegrityHeader::decode(h)?)
    }
}

/// A published message and, if the stream has epoch integrity, the tag
/// authenticating the encoded message.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MessageFile {
    pub message: HybridCiphertext,
    pub tag: Option<MacTag>,
}

impl FileObject for MessageFile {
    const KIND: FileKind = FileKind::Message;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        let mut s = vec![self.message.encode()];
        s.extend(self.tag.map(|t| t.encode()));
        Ok(s)
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        match s {
            [m] => Ok(MessageFile { message: HybridCiphertext::decode(m)?, tag: None }),
            [m, t] => Ok(MessageFile { message: HybridCiphertext::decode(m)?, tag: Some(MacTag::decode(t)?) }),
            _ => Err(malformed("a message file has one or two sections")),
        }
    }
}

/// A revocation list with the proofs backing its entries.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RevocationFile {
    pub list: RevocationList,
    pub proofs: Vec<RevocationProof>,
}

impl FileObject for RevocationFile {
    const KIND: FileKind = FileKind::RevocationList;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        let mut s = vec![self.list.encode()];
        s.extend(self.proofs.iter().map(|p| p.encode()));
        Ok(s)
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let (list, proofs) = s.split_first().ok_or_else(|| malformed("empty revocation file"))?;
        Ok(RevocationFile {
            list: RevocationList::decode(list)?,
            proofs: proofs.iter().map(|p| RevocationProof::decode(p)).collect::<jedi_core::Result<_>>()?,
        })
    }
}

/// Publisher state of a signed epoch: the header, the chain's secret last
/// key and the next unused message index.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChainState {
    pub header: EpochIntegrityHeader,
    pub seed: [u8; 32],
    pub next: u32,
}

impl FileObject for ChainState {
    const KIND: FileKind = FileKind::EpochChain;
    fn to_sections(&self) -> Result<Vec<Vec<u8>>> {
        let mut state = self.seed.to_vec();
        state.extend_from_slice(&self.next.to_be_bytes());
        Ok(vec![self.header.encode(), state])
    }
    fn from_sections(s: &[Vec<u8>]) -> Result<Self> {
        let [h, state] = exactly::<2>(s)?;
        if state.len() != 36 {
            return Err(malformed("chain state"));
        }
        Ok(ChainState {
            header: EpochIntegrityHeader::decode(h)?,
            seed: state[..32].try_into().unwrap(),
            next: u32::from_be_bytes(state[32..].try_into().unwrap()),
        })
    }
}

/// Writes `bytes` to `path`, owner-only if `secret`.
pub fn write_bytes(path: &Path, bytes: &[u8], secret: bool) -> Result<()> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    if secret {
        use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
        opts.mode(0o600);
        // `mode` only applies to newly created files.
        if path.exists() {
            fs::set_permissions(path, fs::Permissions::from_mode(0o600)).map_err(io_at(path))?;
        }
    }
    #[cfg(not(unix))]
    let _ = secret;
    let mut f = opts.open(path).map_err(io_at(path))?;
    f.write_all(bytes).map_err(io_at(path))
}

pub fn save<T: FileObject>(path: &Path, obj: &T) -> Result<()> {
    write_bytes(path, &obj.to_file_bytes()?, T::KIND.is_secret())
}

pub fn load<T: FileObject>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    T::from_file_bytes(&bytes).map_err(|e| match e {
        Error::MalformedFile(m) => Error::MalformedFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

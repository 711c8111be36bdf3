//! What principals do with the scheme: own hierarchies, hold and delegate
//! keys, publish and read messages, sign epochs and ratchet keys forward.

mod hybrid;
mod integrity;
mod store;

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pattern::Layout;
use crate::revocation::RevocationTree;
use crate::wire::{tag, Reader, Writer};
use crate::wkdibe::{setup, MasterKey, Params};

pub use hybrid::{subscribe_decrypt, DecryptionCache, HybridCiphertext, PublisherSession, WrappedKey};
pub use integrity::{
    start_epoch_integrity, verify_epoch_header, verify_mac, EpochIntegrityHeader, EpochSigner, EpochVerifier,
    HashChain, MacTag,
};
pub use store::{accept_delegation, delegate, ratchet_forward, Entry, KeyMaterial, KeySet, KeyStore};

/// Public description of a resource hierarchy: its parameters and how the
/// pattern slots are split. Identified by the digest of the parameters.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Hierarchy {
    params: Params,
    id: [u8; 32],
    label: String,
    layout: Layout,
}

/// Creates a hierarchy with `uri_slots` URI slots, `time_slots` time-tree
/// levels and `revocation_slots` revocation-tree levels (0 disables
/// revocation). Returns the public hierarchy and its master key.
pub fn create_hierarchy<R: RngCore + CryptoRng>(
    label: &str,
    uri_slots: usize,
    time_slots: usize,
    revocation_slots: usize,
    signature_slot: bool,
    rng: &mut R,
) -> Result<(Hierarchy, MasterKey)> {
    let layout = Layout::new(uri_slots, time_slots, revocation_slots)?;
    let (params, master) = setup(layout.total(), signature_slot, rng)?;
    Ok((Hierarchy::from_parts(label.into(), layout, params), master))
}

impl Hierarchy {
    fn from_parts(label: String, layout: Layout, params: Params) -> Self {
        let id = Sha256::digest(params.encode()).into();
        Hierarchy { params, id, label, layout }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn id(&self) -> &[u8; 32] {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn revocation_tree(&self) -> Option<RevocationTree> {
        RevocationTree::from_layout(&self.layout)
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.str(&self.label);
        w.u16(self.layout.uri_slots as u16);
        w.u8(self.layout.time_slots() as u8);
        w.u8(self.layout.revocation_slots as u8);
        w.bytes(&self.params.encode());
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let label = r.string()?;
        let uri = r.u16()? as usize;
        let time = r.u8()? as usize;
        let rev = r.u8()? as usize;
        let layout = Layout::new(uri, time, rev).map_err(|_| Error::MalformedEncoding("hierarchy layout"))?;
        let params = Params::decode(r.bytes()?)?;
        if params.len() != layout.total() {
            return Err(Error::MalformedEncoding("layout does not match parameters"));
        }
        Ok(Hierarchy::from_parts(label, layout, params))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::HIERARCHY);
        self.write(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::HIERARCHY)?;
        let h = Hierarchy::read(&mut r)?;
        r.finish()?;
        Ok(h)
    }
}

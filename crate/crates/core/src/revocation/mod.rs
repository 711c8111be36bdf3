//! Delegable complete-subtree revocation.
//!
//! Every delegation in a revocable hierarchy is tied to a contiguous range of
//! leaves of a binary tree with `n = 2^height` leaves. A node's root-to-node
//! path is written into the last `height` pattern slots, one slot per bit
//! (bit 0 as the scalar 1, bit 1 as 2), leaving deeper slots free.
//!
//! A holder of range `[a, b]` gets a *qualifiable* key for every node of the
//! range's canonical cover, and a *limited* key (unable to fix further
//! revocation slots) for every strict ancestor of those nodes. Publishers
//! encrypt once per node of the subset cover of the unrevoked leaves.

mod list;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::groups::{hash_to_scalar, Gt, Scalar, G1};
use crate::pattern::Layout;
use crate::wire::{tag, Reader, Writer};
use crate::wkdibe::{
    decrypt, Keep, KeyRef, MasterKey, Params, Pattern, Precomputed, SecretKey, Signature, WkdCiphertext,
};

pub use list::{RevocationList, Revoked};

/// Largest supported tree height.
pub const MAX_HEIGHT: u8 = 31;

/// Inclusive range of 1-based leaf indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct LeafRange {
    pub first: u32,
    pub last: u32,
}

impl LeafRange {
    pub fn new(first: u32, last: u32) -> Result<Self> {
        if first == 0 || first > last {
            return Err(Error::OutOfRange);
        }
        Ok(LeafRange { first, last })
    }

    pub fn single(leaf: u32) -> Result<Self> {
        LeafRange::new(leaf, leaf)
    }

    pub fn count(&self) -> u32 {
        self.last - self.first + 1
    }

    pub fn contains(&self, leaf: u32) -> bool {
        self.first <= leaf && leaf <= self.last
    }

    pub fn includes(&self, other: &LeafRange) -> bool {
        self.first <= other.first && other.last <= self.last
    }

    pub fn overlaps(&self, other: &LeafRange) -> bool {
        self.first <= other.last && other.first <= self.last
    }
}

impl fmt::Display for LeafRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

/// A tree node as its root-to-node path; `bits` holds `depth` bits, most
/// significant first. Prefixes of a path are exactly its ancestors.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct NodeId {
    depth: u8,
    bits: u32,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, bits: 0 };

    pub fn new(depth: u8, bits: u32) -> Result<Self> {
        if depth > MAX_HEIGHT || (depth < 32 && bits >> depth != 0) {
            return Err(Error::MalformedEncoding("node bits exceed depth"));
        }
        Ok(NodeId { depth, bits })
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Bit `k` of the path (0 = the root's child).
    pub fn bit(&self, k: u8) -> u32 {
        (self.bits >> (self.depth - 1 - k)) & 1
    }

    pub fn parent(&self) -> Option<NodeId> {
        (self.depth > 0).then(|| NodeId { depth: self.depth - 1, bits: self.bits >> 1 })
    }

    pub fn children(&self) -> [NodeId; 2] {
        let b = self.bits << 1;
        [NodeId { depth: self.depth + 1, bits: b }, NodeId { depth: self.depth + 1, bits: b | 1 }]
    }

    pub fn is_ancestor_or_self(&self, other: &NodeId) -> bool {
        self.depth <= other.depth && other.bits >> (other.depth - self.depth) == self.bits
    }

    /// Breadth-first index: root 1, its children 2 and 3, and so on.
    pub fn heap_index(&self) -> u64 {
        (1u64 << self.depth) + self.bits as u64
    }

    /// All strict ancestors, root first.
    pub fn ancestors(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.depth).map(move |d| NodeId { depth: d, bits: self.bits >> (self.depth - d) })
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.heap_index())
    }
}

/// Canonical cover of a leaf range.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NodeCover {
    /// Maximal aligned subtrees tiling the range, left to right.
    pub roots: Vec<NodeId>,
    /// Strict ancestors of the roots, in node order.
    pub ancestors: Vec<NodeId>,
}

/// The revocation tree of a hierarchy and where its bits live in patterns.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RevocationTree {
    offset: usize,
    height: u8,
}

impl RevocationTree {
    pub fn new(offset: usize, height: u8) -> Result<Self> {
        if height == 0 || height > MAX_HEIGHT {
            return Err(Error::InvalidConfig("revocation tree height must be 1..=31"));
        }
        Ok(RevocationTree { offset, height })
    }

    /// `None` when the layout has no revocation slots.
    pub fn from_layout(layout: &Layout) -> Option<Self> {
        (layout.revocation_slots > 0)
            .then(|| RevocationTree { offset: layout.revocation_offset(), height: layout.revocation_slots as u8 })
    }

    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn leaves(&self) -> u32 {
        1u32 << self.height
    }

    pub fn full_range(&self) -> LeafRange {
        LeafRange { first: 1, last: self.leaves() }
    }

    pub fn slots(&self) -> Vec<usize> {
        (self.offset..self.offset + self.height as usize).collect()
    }

    pub fn check(&self, r: &LeafRange) -> Result<()> {
        if r.first == 0 || r.first > r.last || r.last > self.leaves() {
            return Err(Error::OutOfRange);
        }
        Ok(())
    }

    pub fn leaf(&self, i: u32) -> Result<NodeId> {
        self.check(&LeafRange { first: i, last: i })?;
        Ok(NodeId { depth: self.height, bits: i - 1 })
    }

    /// Leaves under `node`.
    pub fn leaves_of(&self, node: &NodeId) -> LeafRange {
        let shift = self.height - node.depth;
        LeafRange { first: (node.bits << shift) + 1, last: ((node.bits + 1) << shift) }
    }

    pub fn node_cover(&self, r: &LeafRange) -> Result<NodeCover> {
        self.check(r)?;
        let mut roots = Vec::new();
        self.tile(NodeId::ROOT, &mut |n| {
            let span = self.leaves_of(&n);
            if r.includes(&span) {
                roots.push(n);
                Tile::Take
            } else if r.overlaps(&span) {
                Tile::Split
            } else {
                Tile::Skip
            }
        });
        let ancestors: BTreeSet<NodeId> = roots.iter().flat_map(|n| n.ancestors().collect::<Vec<_>>()).collect();
        Ok(NodeCover { roots, ancestors: ancestors.into_iter().collect() })
    }

    /// Disjoint subtrees covering exactly the leaves not in any revoked range.
    pub fn subset_cover(&self, revoked: &[LeafRange]) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.tile(NodeId::ROOT, &mut |n| {
            let span = self.leaves_of(&n);
            if revoked.iter().all(|r| !r.overlaps(&span)) {
                out.push(n);
                Tile::Take
            } else if revoked.iter().any(|r| r.includes(&span)) {
                Tile::Skip
            } else {
                Tile::Split
            }
        });
        out
    }

    fn tile(&self, node: NodeId, visit: &mut impl FnMut(NodeId) -> Tile) {
        if let Tile::Split = visit(node) {
            if node.depth < self.height {
                for c in node.children() {
                    self.tile(c, visit);
                }
            }
        }
    }

    fn bit_scalar(bit: u32) -> Scalar {
        Scalar::from_u64(bit as u64 + 1)
    }

    /// `base` with the node's path written into the revocation slots.
    pub fn node_pattern(&self, base: &Pattern, node: &NodeId) -> Result<Pattern> {
        self.check_base(base)?;
        let mut p = base.clone();
        for k in 0..node.depth {
            p.set(self.offset + k as usize, Some(Self::bit_scalar(node.bit(k))))?;
        }
        Ok(p)
    }

    /// `Q` of a node pattern from `Q` of its base.
    fn node_q(&self, params: &Params, q_base: &G1, node: &NodeId) -> G1 {
        (0..node.depth).fold(*q_base, |acc, k| acc + params.h[self.offset + k as usize] * Self::bit_scalar(node.bit(k)))
    }

    fn check_base(&self, base: &Pattern) -> Result<()> {
        if base.len() < self.offset + self.height as usize {
            return Err(Error::InvalidLength("pattern too short for the revocation slots"));
        }
        if self.slots().iter().any(|&i| !base.is_free(i)) {
            return Err(Error::InvalidConfig("base pattern must leave revocation slots free"));
        }
        Ok(())
    }
}

enum Tile {
    Take,
    Split,
    Skip,
}

/// The keys a holder of a leaf range keeps for one (URI, time) pattern.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RangeKeyBundle {
    pub(crate) range: LeafRange,
    pub(crate) base: Pattern,
    pub(crate) qualifiable: BTreeMap<NodeId, SecretKey>,
    pub(crate) limited: BTreeMap<NodeId, SecretKey>,
    /// Key for `base` itself without revocation-slot elements: it signs but
    /// cannot decrypt anything a publisher produces.
    pub(crate) signer: Option<SecretKey>,
}

impl RangeKeyBundle {
    pub fn range(&self) -> LeafRange {
        self.range
    }

    pub fn base(&self) -> &Pattern {
        &self.base
    }

    pub fn qualifiable(&self) -> &BTreeMap<NodeId, SecretKey> {
        &self.qualifiable
    }

    pub fn limited(&self) -> &BTreeMap<NodeId, SecretKey> {
        &self.limited
    }

    pub fn signer(&self) -> Option<&SecretKey> {
        self.signer.as_ref()
    }

    /// True if a bundle for the narrower base `target` can be derived.
    pub fn can_derive(&self, target: &Pattern) -> bool {
        let Some(k) = self.qualifiable.values().next() else {
            return false;
        };
        let rev: BTreeSet<usize> = k.pattern.fixed().map(|(i, _)| i).filter(|i| self.base.is_free(*i)).collect();
        self.base.matches(target)
            && target.fixed().all(|(i, _)| rev.contains(&i) || !self.base.is_free(i) || k.can_fix(i))
    }

    pub fn key_count(&self) -> usize {
        self.qualifiable.len() + self.limited.len()
    }

    /// Pairing checks on every key and that the node sets match the range.
    pub fn check(&self, params: &Params, tree: &RevocationTree) -> Result<()> {
        let cover = tree.node_cover(&self.range)?;
        let q_nodes: Vec<NodeId> = self.qualifiable.keys().copied().collect();
        let l_nodes: Vec<NodeId> = self.limited.keys().copied().collect();
        let mut roots = cover.roots.clone();
        roots.sort();
        if q_nodes != roots || l_nodes != cover.ancestors {
            return Err(Error::MalformedKey);
        }
        for (node, key) in self.qualifiable.iter().chain(&self.limited) {
            if key.pattern != tree.node_pattern(&self.base, node)? || !params.check_key(key) {
                return Err(Error::MalformedKey);
            }
        }
        if let Some(s) = &self.signer {
            if s.pattern != self.base || !params.check_key(s) || tree.slots().iter().any(|&j| s.can_fix(j)) {
                return Err(Error::MalformedKey);
            }
        }
        Ok(())
    }

    pub(crate) fn write(&self, w: &mut Writer) -> Result<()> {
        w.u32(self.range.first);
        w.u32(self.range.last);
        w.pattern(&self.base);
        for map in [&self.qualifiable, &self.limited] {
            w.u32(map.len() as u32);
            for (node, key) in map {
                w.u8(node.depth);
                w.u32(node.bits);
                w.secret_key(key)?;
            }
        }
        w.bool(self.signer.is_some());
        if let Some(s) = &self.signer {
            w.secret_key(s)?;
        }
        Ok(())
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let range = LeafRange::new(r.u32()?, r.u32()?).map_err(|_| Error::MalformedEncoding("leaf range"))?;
        let base = r.pattern()?;
        let mut maps = [BTreeMap::new(), BTreeMap::new()];
        for map in maps.iter_mut() {
            let n = r.u32()?;
            for _ in 0..n {
                let node = NodeId::new(r.u8()?, r.u32()?)?;
                map.insert(node, r.secret_key()?);
            }
        }
        let signer = if r.bool()? { Some(r.secret_key()?) } else { None };
        let [qualifiable, limited] = maps;
        Ok(RangeKeyBundle { range, base, qualifiable, limited, signer })
    }
}

/// Where a new bundle's keys come from.
#[derive(Clone, Copy, Debug)]
pub enum BundleParent<'a> {
    Master(&'a MasterKey),
    Bundle(&'a RangeKeyBundle),
}

/// Derives the bundle for leaves `sub` and pattern `base` (whose revocation
/// slots must be free). From a parent bundle, `sub` must lie within its
/// range and `base` must be matched by its base pattern.
pub fn derive_range_bundle<R: RngCore + CryptoRng>(
    params: &Params,
    tree: &RevocationTree,
    parent: BundleParent<'_>,
    base: &Pattern,
    sub: LeafRange,
    rng: &mut R,
) -> Result<RangeKeyBundle> {
    params.check_len(base)?;
    tree.check_base(base)?;
    let cover = tree.node_cover(&sub)?;
    if let BundleParent::Bundle(b) = parent {
        if !b.range.includes(&sub) {
            return Err(Error::OutOfRange);
        }
        if !b.base.matches(base) {
            return Err(Error::NotAMatch);
        }
    }
    let rev_slots = tree.slots();
    let limited_keep = Keep { drop_slots: &rev_slots, signature: false };
    let q_base = params.q_of(base);

    // Parent key to qualify from for a node, and whether it already sits at
    // exactly that node as a limited key.
    let source = |node: &NodeId| -> Result<KeyRef<'_>> {
        match parent {
            BundleParent::Master(m) => Ok(KeyRef::Master(m)),
            BundleParent::Bundle(b) => {
                if let Some(k) = b.limited.get(node) {
                    return Ok(KeyRef::Secret(k));
                }
                b.qualifiable
                    .iter()
                    .find(|(p, _)| p.is_ancestor_or_self(node))
                    .map(|(_, k)| KeyRef::Secret(k))
                    .ok_or(Error::OutOfRange)
            }
        }
    };

    let mut qualifiable = BTreeMap::new();
    for node in &cover.roots {
        let target = tree.node_pattern(base, node)?;
        let q = tree.node_q(params, &q_base, node);
        let key = params.key_der_with_q(source(node)?, &target, &q, Keep::ALL, rng)?;
        qualifiable.insert(*node, key);
    }
    let mut limited = BTreeMap::new();
    for node in &cover.ancestors {
        let target = tree.node_pattern(base, node)?;
        let q = tree.node_q(params, &q_base, node);
        let key = params.key_der_with_q(source(node)?, &target, &q, limited_keep, rng)?;
        limited.insert(*node, key);
    }
    let signer = if params.has_signature_slot() {
        let keep = Keep { drop_slots: &rev_slots, signature: true };
        let src = match parent {
            BundleParent::Master(m) => Some(KeyRef::Master(m)),
            BundleParent::Bundle(b) => b.signer.as_ref().map(KeyRef::Secret),
        };
        match src {
            Some(src) => Some(params.key_der_with_q(src, base, &q_base, keep, rng)?),
            None => None,
        }
    } else {
        None
    };
    Ok(RangeKeyBundle { range: sub, base: base.clone(), qualifiable, limited, signer })
}

/// One WKD-IBE ciphertext of a revocable encryption and its node.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NodeCiphertext {
    pub node: NodeId,
    pub ct: WkdCiphertext,
}

/// Encrypts `m` once per node of the subset cover of the unrevoked leaves.
/// One precomputation of the base pattern is adjusted for every node.
/// If every leaf is revoked the result is empty.
pub fn encrypt_revocable<R: RngCore + CryptoRng>(
    params: &Params,
    tree: &RevocationTree,
    base: &Pattern,
    revoked: &[LeafRange],
    m: &Gt,
    rng: &mut R,
) -> Result<Vec<NodeCiphertext>> {
    params.check_len(base)?;
    tree.check_base(base)?;
    let pre = params.precompute(base)?;
    encrypt_revocable_prepared(params, tree, &pre, revoked, m, rng)
}

/// [`encrypt_revocable`] from an existing precomputation of the base pattern.
pub fn encrypt_revocable_prepared<R: RngCore + CryptoRng>(
    params: &Params,
    tree: &RevocationTree,
    base: &Precomputed,
    revoked: &[LeafRange],
    m: &Gt,
    rng: &mut R,
) -> Result<Vec<NodeCiphertext>> {
    tree.check_base(base.pattern())?;
    let nodes = tree.subset_cover(revoked);
    let mut out = Vec::with_capacity(nodes.len());
    let mut pre = base.clone();
    for node in nodes {
        let target = tree.node_pattern(base.pattern(), &node)?;
        pre = params.adjust_precomputed(&pre, &target)?;
        out.push(NodeCiphertext { node, ct: params.encrypt_prepared(&pre, m, rng) });
    }
    Ok(out)
}

/// Decrypts with the first ciphertext whose node is reachable from the
/// bundle: an exact limited key, or a qualifiable key at or above the node.
/// `message_base` is the message's (URI, time) pattern, which the bundle's
/// base must match. Exactly one WKD-IBE decryption is performed.
pub fn decrypt_revocable(
    params: &Params,
    tree: &RevocationTree,
    bundle: &RangeKeyBundle,
    message_base: &Pattern,
    cts: &[NodeCiphertext],
) -> Result<Gt> {
    if !bundle.base.matches(message_base) {
        return Err(Error::NotAMatch);
    }
    for c in cts {
        let source = bundle
            .limited
            .get(&c.node)
            .or_else(|| bundle.qualifiable.iter().find(|(n, _)| n.is_ancestor_or_self(&c.node)).map(|(_, k)| k));
        if let Some(key) = source {
            let target = tree.node_pattern(message_base, &c.node)?;
            let exact = params.non_delegable_key_der(key, &target)?;
            return decrypt(&exact, &c.ct);
        }
    }
    Err(Error::Revoked)
}

/// `SHA-256("REVOKE" || hierarchy id || first || last)`.
pub fn revocation_object_digest(hierarchy: &[u8; 32], range: &LeafRange) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"REVOKE")
        .chain_update(hierarchy)
        .chain_update(range.first.to_be_bytes())
        .chain_update(range.last.to_be_bytes())
        .finalize()
        .into()
}

/// Evidence that the holder of a leaf range asked for its revocation: the
/// fixed revocation object signed with each qualifiable key of the range.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RevocationProof {
    pub hierarchy: [u8; 32],
    pub range: LeafRange,
    pub base: Pattern,
    pub signatures: Vec<(NodeId, Signature)>,
}

impl RevocationProof {
    pub fn create<R: RngCore + CryptoRng>(
        params: &Params,
        hierarchy: [u8; 32],
        bundle: &RangeKeyBundle,
        rng: &mut R,
    ) -> Result<Self> {
        let m = hash_to_scalar(&revocation_object_digest(&hierarchy, &bundle.range));
        let signatures =
            bundle.qualifiable.iter().map(|(n, k)| Ok((*n, params.sign(k, &m, rng)?))).collect::<Result<Vec<_>>>()?;
        Ok(RevocationProof { hierarchy, range: bundle.range, base: bundle.base.clone(), signatures })
    }

    pub fn digest(&self) -> [u8; 32] {
        revocation_object_digest(&self.hierarchy, &self.range)
    }

    pub fn verify(&self, params: &Params, tree: &RevocationTree) -> bool {
        let Ok(cover) = tree.node_cover(&self.range) else {
            return false;
        };
        let mut roots = cover.roots;
        roots.sort();
        let nodes: Vec<NodeId> = self.signatures.iter().map(|(n, _)| *n).collect();
        if nodes != roots {
            return false;
        }
        let m = hash_to_scalar(&self.digest());
        self.signatures
            .iter()
            .all(|(n, sig)| tree.node_pattern(&self.base, n).is_ok_and(|p| params.verify(&p, sig, &m)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::REVOCATION_PROOF);
        w.raw(&self.hierarchy);
        w.u32(self.range.first);
        w.u32(self.range.last);
        w.pattern(&self.base);
        w.u32(self.signatures.len() as u32);
        for (n, s) in &self.signatures {
            w.u8(n.depth);
            w.u32(n.bits);
            w.raw(&s.to_bytes());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::REVOCATION_PROOF)?;
        let hierarchy = r.array()?;
        let range = LeafRange::new(r.u32()?, r.u32()?).map_err(|_| Error::MalformedEncoding("leaf range"))?;
        let base = r.pattern()?;
        let n = r.u32()?;
        let mut signatures = Vec::new();
        for _ in 0..n {
            let node = NodeId::new(r.u8()?, r.u32()?)?;
            signatures.push((node, Signature::from_bytes(r.take(144)?)?));
        }
        r.finish()?;
        Ok(RevocationProof { hierarchy, range, base, signatures })
    }
}

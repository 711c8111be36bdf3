use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use super::Hierarchy;
use crate::error::{Error, Result};
use crate::pattern::{Calendar, Hour, TimePath, TimeRange, Uri};
use crate::revocation::{derive_range_bundle, BundleParent, LeafRange, RangeKeyBundle};
use crate::wire::{tag, Reader, Writer};
use crate::wkdibe::{MasterKey, Pattern, SecretKey};

/// Key material of a store entry. Hierarchies with revocation slots only
/// ever hand out ranged bundles.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum KeyMaterial {
    Single(SecretKey),
    Ranged(RangeKeyBundle),
}

/// A key for `uri` during the time subtree `time` in one hierarchy.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Entry {
    pub hierarchy: [u8; 32],
    pub uri: Uri,
    pub time: TimePath,
    pub material: KeyMaterial,
}

impl Entry {
    /// Pattern of the (URI, time) grant, revocation slots free.
    pub fn pattern(&self) -> &Pattern {
        match &self.material {
            KeyMaterial::Single(k) => k.pattern(),
            KeyMaterial::Ranged(b) => b.base(),
        }
    }

    pub fn leaf_range(&self) -> Option<LeafRange> {
        match &self.material {
            KeyMaterial::Single(_) => None,
            KeyMaterial::Ranged(b) => Some(b.range()),
        }
    }

    fn can_derive(&self, target: &Pattern) -> bool {
        match &self.material {
            KeyMaterial::Single(k) => k.can_derive(target),
            KeyMaterial::Ranged(b) => b.can_derive(target),
        }
    }

    fn write(&self, w: &mut Writer) -> Result<()> {
        w.raw(&self.hierarchy);
        w.str(&format!("{}", self.uri));
        write_time(w, &self.time);
        match &self.material {
            KeyMaterial::Single(k) => {
                w.u8(0);
                w.secret_key(k)
            }
            KeyMaterial::Ranged(b) => {
                w.u8(1);
                b.write(w)
            }
        }
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let hierarchy = r.array()?;
        let uri = Uri::parse(&r.string()?).map_err(|_| Error::MalformedEncoding("entry URI"))?;
        let time = read_time(r)?;
        let material = match r.u8()? {
            0 => KeyMaterial::Single(r.secret_key()?),
            1 => KeyMaterial::Ranged(RangeKeyBundle::read(r)?),
            _ => return Err(Error::MalformedEncoding("key material kind")),
        };
        Ok(Entry { hierarchy, uri, time, material })
    }
}

const ANY_PART: u32 = u32::MAX;

pub(crate) fn write_time(w: &mut Writer, t: &TimePath) {
    w.u8(match t.calendar() {
        Calendar::Depth4 => 4,
        Calendar::Depth6 => 6,
    });
    w.u8(t.len() as u8);
    for p in t.parts() {
        w.u32(p.unwrap_or(ANY_PART));
    }
}

pub(crate) fn read_time(r: &mut Reader<'_>) -> Result<TimePath> {
    let calendar = match r.u8()? {
        4 => Calendar::Depth4,
        6 => Calendar::Depth6,
        _ => return Err(Error::MalformedEncoding("calendar")),
    };
    let n = r.u8()? as usize;
    if n > calendar.levels() {
        return Err(Error::MalformedEncoding("time path too long"));
    }
    let mut parts = Vec::with_capacity(n);
    for _ in 0..n {
        let v = r.u32()?;
        parts.push((v != ANY_PART).then_some(v));
    }
    Ok(TimePath::from_parts(calendar, parts))
}

/// The unit of delegation: keys for one URI over a time range, plus the
/// public hierarchy so the recipient can use them without further lookup.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KeySet {
    pub hierarchy: Hierarchy,
    pub uri: Uri,
    pub entries: Vec<Entry>,
    /// Opaque proof-of-delegation chain carried alongside; not interpreted.
    pub chain: Vec<u8>,
}

impl KeySet {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::with_header(tag::KEY_SET);
        self.hierarchy.write(&mut w);
        w.str(&format!("{}", self.uri));
        w.u32(self.entries.len() as u32);
        for e in &self.entries {
            e.write(&mut w)?;
        }
        w.bytes(&self.chain);
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::KEY_SET)?;
        let hierarchy = Hierarchy::read(&mut r)?;
        let uri = Uri::parse(&r.string()?).map_err(|_| Error::MalformedEncoding("key set URI"))?;
        let n = r.u32()?;
        let entries = (0..n).map(|_| Entry::read(&mut r)).collect::<Result<Vec<_>>>()?;
        let chain = r.bytes()?.to_vec();
        r.finish()?;
        Ok(KeySet { hierarchy, uri, entries, chain })
    }
}

/// Everything a principal holds: known hierarchies, master keys of owned
/// ones, and delegated entries.
#[derive(Clone, Debug, Default)]
pub struct KeyStore {
    hierarchies: BTreeMap<[u8; 32], Hierarchy>,
    masters: BTreeMap<[u8; 32], MasterKey>,
    entries: Vec<Entry>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_hierarchy(&mut self, h: Hierarchy) {
        self.hierarchies.entry(h.id).or_insert(h);
    }

    /// Registers an owned hierarchy.
    pub fn add_authority(&mut self, h: Hierarchy, master: MasterKey) {
        self.masters.insert(h.id, master);
        self.add_hierarchy(h);
    }

    pub fn hierarchy(&self, id: &[u8; 32]) -> Result<&Hierarchy> {
        self.hierarchies.get(id).ok_or(Error::UnknownHierarchy)
    }

    pub fn hierarchies(&self) -> impl Iterator<Item = &Hierarchy> {
        self.hierarchies.values()
    }

    pub fn master(&self, id: &[u8; 32]) -> Option<&MasterKey> {
        self.masters.get(id)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Entries of hierarchy `id` whose grant matches `target`, best first:
    /// most specific URI, then latest expiry.
    pub fn lookup(&self, id: &[u8; 32], target: &Pattern) -> Vec<&Entry> {
        let Some(h) = self.hierarchies.get(id) else {
            return Vec::new();
        };
        let mut found: Vec<&Entry> =
            self.entries.iter().filter(|e| e.hierarchy == *id && e.pattern().matches(target)).collect();
        found.sort_by_key(|e| core::cmp::Reverse(rank(h, e)));
        found
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::with_header(tag::KEY_STORE);
        w.u32(self.hierarchies.len() as u32);
        for h in self.hierarchies.values() {
            h.write(&mut w);
        }
        w.u32(self.masters.len() as u32);
        for (id, m) in &self.masters {
            w.raw(id);
            w.bytes(&m.encode());
        }
        w.u32(self.entries.len() as u32);
        for e in &self.entries {
            e.write(&mut w)?;
        }
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::KEY_STORE)?;
        let mut store = KeyStore::new();
        for _ in 0..r.u32()? {
            store.add_hierarchy(Hierarchy::read(&mut r)?);
        }
        for _ in 0..r.u32()? {
            let id: [u8; 32] = r.array()?;
            if !store.hierarchies.contains_key(&id) {
                return Err(Error::MalformedEncoding("master key for unknown hierarchy"));
            }
            store.masters.insert(id, MasterKey::decode(r.bytes()?)?);
        }
        for _ in 0..r.u32()? {
            let e = Entry::read(&mut r)?;
            if !store.hierarchies.contains_key(&e.hierarchy) {
                return Err(Error::MalformedEncoding("entry for unknown hierarchy"));
            }
            store.entries.push(e);
        }
        r.finish()?;
        Ok(store)
    }
}

fn rank(h: &Hierarchy, e: &Entry) -> (usize, i64) {
    let uri = (0..h.layout.uri_slots).filter(|i| !e.pattern().is_free(*i)).count();
    let expiry = h.layout.tree.bounds(&e.time).map_or(i64::MAX, |(_, last)| last.0);
    (uri, expiry)
}

/// True if some pattern matches both.
fn compatible(a: &Pattern, b: &Pattern) -> bool {
    a.slots().iter().zip(b.slots()).all(|(x, y)| x.is_none() || y.is_none() || x == y)
}

enum Source<'a> {
    Master(&'a MasterKey),
    Entry(&'a Entry),
}

struct Delegation<'a, R> {
    store: &'a KeyStore,
    h: &'a Hierarchy,
    uri: &'a Uri,
    leaves: Option<LeafRange>,
    rng: &'a mut R,
    out: Vec<Entry>,
    uncovered: Vec<String>,
}

impl<'a, R: RngCore + CryptoRng> Delegation<'a, R> {
    fn source(&self, target: &Pattern) -> Option<Source<'a>> {
        let store: &'a KeyStore = self.store;
        if let Some(m) = store.masters.get(&self.h.id) {
            return Some(Source::Master(m));
        }
        store
            .lookup(&self.h.id, target)
            .into_iter()
            .find(|e| {
                e.can_derive(target)
                    && match (self.leaves, e.leaf_range()) {
                        (Some(want), Some(have)) => have.includes(&want),
                        _ => true,
                    }
            })
            .map(Source::Entry)
    }

    fn derive(&mut self, source: Source<'_>, target: &Pattern, time: &TimePath) -> Result<Entry> {
        let params = &self.h.params;
        let material = match self.h.revocation_tree() {
            None => KeyMaterial::Single(match source {
                Source::Master(m) => params.key_der(m, target, self.rng)?,
                Source::Entry(Entry { material: KeyMaterial::Single(k), .. }) => params.key_der(k, target, self.rng)?,
                Source::Entry(_) => return Err(Error::MalformedKey),
            }),
            Some(tree) => {
                let (parent, have) = match source {
                    Source::Master(m) => (BundleParent::Master(m), tree.full_range()),
                    Source::Entry(Entry { material: KeyMaterial::Ranged(b), .. }) => {
                        (BundleParent::Bundle(b), b.range())
                    }
                    Source::Entry(_) => return Err(Error::MalformedKey),
                };
                let sub = self.leaves.unwrap_or(have);
                KeyMaterial::Ranged(derive_range_bundle(params, &tree, parent, target, sub, self.rng)?)
            }
        };
        Ok(Entry { hierarchy: self.h.id, uri: self.uri.clone(), time: time.clone(), material })
    }

    fn node(&mut self, time: &TimePath) -> Result<()> {
        let target = self.h.layout.key_pattern(self.uri, time)?;
        if let Some(source) = self.source(&target) {
            let entry = self.derive(source, &target, time)?;
            self.out.push(entry);
            return Ok(());
        }
        let children = self.h.layout.tree.children_of(time);
        let overlapping =
            self.store.entries.iter().any(|e| e.hierarchy == self.h.id && compatible(e.pattern(), &target));
        if children.is_empty() || !overlapping {
            self.uncovered.push(format!("{} @ {}", self.uri, time.display_in(&self.h.layout.tree)));
            return Ok(());
        }
        for c in children {
            self.node(&c)?;
        }
        Ok(())
    }
}

/// Derives keys for `uri` over `range` from whatever the store holds:
/// one key per element of the range's cover, splitting an element into
/// its children when no single stored key covers it. In hierarchies with
/// revocation, `leaves` selects the leaf range to hand out (default: the
/// source's whole range).
pub fn delegate<R: RngCore + CryptoRng>(
    store: &KeyStore,
    hierarchy: &[u8; 32],
    uri: &Uri,
    range: &TimeRange,
    leaves: Option<LeafRange>,
    rng: &mut R,
) -> Result<KeySet> {
    let h = store.hierarchy(hierarchy)?;
    if let (Some(tree), Some(l)) = (h.revocation_tree(), leaves) {
        tree.check(&l)?;
    }
    let mut d = Delegation { store, h, uri, leaves, rng, out: Vec::new(), uncovered: Vec::new() };
    for node in h.layout.tree.cover(range) {
        d.node(&node)?;
    }
    if !d.uncovered.is_empty() {
        return Err(Error::InsufficientAuthority { uncovered: d.uncovered });
    }
    Ok(KeySet { hierarchy: h.clone(), uri: uri.clone(), entries: d.out, chain: Vec::new() })
}

/// Adds the key set's entries after checking each is well formed and
/// matches its stated grant. Entries already held are skipped; returns how
/// many were added.
pub fn accept_delegation(store: &mut KeyStore, ks: &KeySet) -> Result<usize> {
    let h = &ks.hierarchy;
    let tree = h.revocation_tree();
    for e in &ks.entries {
        if e.hierarchy != h.id || e.uri != ks.uri {
            return Err(Error::MalformedKey);
        }
        let want = h.layout.key_pattern(&e.uri, &e.time).map_err(|_| Error::MalformedKey)?;
        if *e.pattern() != want {
            return Err(Error::MalformedKey);
        }
        match (&e.material, &tree) {
            (KeyMaterial::Single(k), None) if h.params.check_key(k) => {}
            (KeyMaterial::Ranged(b), Some(t)) => b.check(&h.params, t)?,
            _ => return Err(Error::MalformedKey),
        }
    }
    store.add_hierarchy(h.clone());
    let mut added = 0;
    for e in &ks.entries {
        if !store.entries.contains(e) {
            store.entries.push(e.clone());
            added += 1;
        }
    }
    Ok(added)
}

/// Re-qualifies every entry to start at the slot ending at `now` and drops
/// entries that have fully elapsed, so messages stamped before `now` can no
/// longer be read. Entries with `+` or unbounded time are kept as they are.
pub fn ratchet_forward<R: RngCore + CryptoRng>(store: &mut KeyStore, now: Hour, rng: &mut R) -> Result<()> {
    let mut next = Vec::with_capacity(store.entries.len());
    for e in core::mem::take(&mut store.entries) {
        let h = &store.hierarchies[&e.hierarchy];
        let Some((first, last)) = h.layout.tree.bounds(&e.time) else {
            next.push(e);
            continue;
        };
        if first >= now {
            next.push(e);
            continue;
        }
        if last < now {
            continue;
        }
        for time in h.layout.tree.cover(&TimeRange::new(now, last)?) {
            let target = h.layout.key_pattern(&e.uri, &time)?;
            let material = match &e.material {
                KeyMaterial::Single(k) => KeyMaterial::Single(h.params.key_der(k, &target, rng)?),
                KeyMaterial::Ranged(b) => {
                    let tree = h.revocation_tree().ok_or(Error::MalformedKey)?;
                    KeyMaterial::Ranged(derive_range_bundle(
                        &h.params,
                        &tree,
                        BundleParent::Bundle(b),
                        &target,
                        b.range(),
                        rng,
                    )?)
                }
            };
            next.push(Entry { hierarchy: e.hierarchy, uri: e.uri.clone(), time, material });
        }
    }
    store.entries = next;
    Ok(())
}

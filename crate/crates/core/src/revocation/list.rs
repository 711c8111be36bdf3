use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::LeafRange;
use crate::error::{Error, Result};
use crate::pattern::{matches_uri, Hour, Uri};
use crate::wire::{tag, Reader, Writer};

/// A revoked leaf range and, if known, the last hour the revoked key could
/// decrypt; past that the entry is useless and may be culled.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Revoked {
    pub range: LeafRange,
    pub expires: Option<Hour>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
struct PrefixState {
    /// Epoch of the last change under this prefix.
    changed_at: u64,
    ranges: Vec<Revoked>,
}

/// Revoked leaf ranges of one hierarchy, scoped by URI filter.
///
/// `epoch` counts changes. Publishers rotate keys when [`epoch_for`] of
/// their URI moves, so a change under one prefix does not disturb streams
/// elsewhere.
///
/// [`epoch_for`]: RevocationList::epoch_for
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RevocationList {
    hierarchy: [u8; 32],
    epoch: u64,
    prefixes: BTreeMap<Uri, PrefixState>,
}

impl RevocationList {
    pub fn new(hierarchy: [u8; 32]) -> Self {
        RevocationList { hierarchy, epoch: 0, prefixes: BTreeMap::new() }
    }

    pub fn hierarchy(&self) -> &[u8; 32] {
        &self.hierarchy
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn bump(&mut self, prefix: &Uri) {
        self.epoch += 1;
        let epoch = self.epoch;
        self.prefixes.entry(prefix.clone()).or_default().changed_at = epoch;
    }

    /// Returns false (and changes nothing) if the range is already revoked
    /// under this prefix.
    pub fn revoke(&mut self, prefix: &Uri, range: LeafRange, expires: Option<Hour>) -> bool {
        if self.prefixes.get(prefix).is_some_and(|s| s.ranges.iter().any(|r| r.range == range)) {
            return false;
        }
        self.bump(prefix);
        self.prefixes.get_mut(prefix).expect("just inserted").ranges.push(Revoked { range, expires });
        true
    }

    pub fn unrevoke(&mut self, prefix: &Uri, range: LeafRange) -> bool {
        let Some(state) = self.prefixes.get_mut(prefix) else {
            return false;
        };
        let before = state.ranges.len();
        state.ranges.retain(|r| r.range != range);
        if state.ranges.len() == before {
            return false;
        }
        self.bump(prefix);
        true
    }

    /// Drops entries whose key expired before `now`; returns how many.
    pub fn cull(&mut self, now: Hour) -> usize {
        let mut touched = Vec::new();
        let mut removed = 0;
        for (prefix, state) in self.prefixes.iter_mut() {
            let before = state.ranges.len();
            state.ranges.retain(|r| r.expires.is_none_or(|e| e >= now));
            if state.ranges.len() != before {
                removed += before - state.ranges.len();
                touched.push(prefix.clone());
            }
        }
        for p in touched {
            self.bump(&p);
        }
        removed
    }

    /// Ranges revoked for messages on `uri`.
    pub fn revoked_for(&self, uri: &Uri) -> Vec<LeafRange> {
        self.prefixes
            .iter()
            .filter(|(p, _)| matches_uri(p, uri))
            .flat_map(|(_, s)| s.ranges.iter().map(|r| r.range))
            .collect()
    }

    /// Latest change affecting `uri`; 0 if none ever did.
    pub fn epoch_for(&self, uri: &Uri) -> u64 {
        self.prefixes.iter().filter(|(p, _)| matches_uri(p, uri)).map(|(_, s)| s.changed_at).max().unwrap_or(0)
    }

    /// `(prefix, entry)` for every revoked range.
    pub fn entries(&self) -> impl Iterator<Item = (&Uri, &Revoked)> {
        self.prefixes.iter().flat_map(|(p, s)| s.ranges.iter().map(move |r| (p, r)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(tag::REVOCATION_LIST);
        w.raw(&self.hierarchy);
        w.u64(self.epoch);
        w.u32(self.prefixes.len() as u32);
        for (p, s) in &self.prefixes {
            w.str(&alloc::format!("{p}"));
            w.u64(s.changed_at);
            w.u32(s.ranges.len() as u32);
            for r in &s.ranges {
                w.u32(r.range.first);
                w.u32(r.range.last);
                w.bool(r.expires.is_some());
                w.i64(r.expires.map_or(0, |h| h.0));
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, tag::REVOCATION_LIST)?;
        let hierarchy = r.array()?;
        let epoch = r.u64()?;
        let n = r.u32()?;
        let mut prefixes = BTreeMap::new();
        for _ in 0..n {
            let uri = Uri::parse(&r.string()?).map_err(|_| Error::MalformedEncoding("revocation prefix"))?;
            let changed_at = r.u64()?;
            if changed_at > epoch {
                return Err(Error::MalformedEncoding("prefix epoch ahead of list epoch"));
            }
            let m = r.u32()?;
            let mut ranges = Vec::new();
            for _ in 0..m {
                let range = LeafRange::new(r.u32()?, r.u32()?).map_err(|_| Error::MalformedEncoding("leaf range"))?;
                let has = r.bool()?;
                let h = r.i64()?;
                ranges.push(Revoked { range, expires: has.then_some(Hour(h)) });
            }
            prefixes.insert(uri, PrefixState { changed_at, ranges });
        }
        r.finish()?;
        Ok(RevocationList { hierarchy, epoch, prefixes })
    }
}

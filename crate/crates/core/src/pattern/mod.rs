//! Mapping of URIs and times onto WKD-IBE patterns.
//!
//! A pattern is split into three consecutive regions: `uri_slots` slots for
//! URI components (one of which is reserved for the terminator of an exact
//! URI), one slot per time-tree level, and `revocation_slots` slots for
//! revocation-tree node bits.

mod time;
mod uri;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups::{hash_to_scalar, Scalar};
use crate::wkdibe::Pattern;

pub use time::{
    civil_from_days, days_from_civil, days_in_month, Calendar, Hour, TimePath, TimeRange, TimeTree, MONTHS,
};
pub use uri::{matches_uri, Uri, UriComponent, TERMINATOR};

const URI_TAG: u8 = b'u';
const TIME_TAG: u8 = b't';

pub fn uri_component_hash(label: &str) -> Scalar {
    tagged(URI_TAG, label)
}

pub fn time_label_hash(label: &str) -> Scalar {
    tagged(TIME_TAG, label)
}

/// The terminator is hashed bare, which no tagged component can collide with.
pub fn terminator_hash() -> Scalar {
    hash_to_scalar(TERMINATOR.as_bytes())
}

fn tagged(tag: u8, label: &str) -> Scalar {
    let mut buf = Vec::with_capacity(label.len() + 1);
    buf.push(tag);
    buf.extend_from_slice(label.as_bytes());
    hash_to_scalar(&buf)
}

/// How a hierarchy's pattern slots are divided.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Layout {
    pub uri_slots: usize,
    pub tree: TimeTree,
    pub revocation_slots: usize,
}

impl Layout {
    /// `time_slots` selects the time tree as in [`TimeTree::for_slots`].
    pub fn new(uri_slots: usize, time_slots: usize, revocation_slots: usize) -> Result<Self> {
        if uri_slots == 0 {
            return Err(Error::InvalidConfig("at least one URI slot is needed for the terminator"));
        }
        if revocation_slots > 32 {
            return Err(Error::InvalidConfig("at most 32 revocation slots"));
        }
        Ok(Layout { uri_slots, tree: TimeTree::for_slots(time_slots)?, revocation_slots })
    }

    pub fn time_slots(&self) -> usize {
        self.tree.depth()
    }

    pub fn total(&self) -> usize {
        self.uri_slots + self.time_slots() + self.revocation_slots
    }

    pub fn time_offset(&self) -> usize {
        self.uri_slots
    }

    pub fn revocation_offset(&self) -> usize {
        self.uri_slots + self.time_slots()
    }

    pub fn revocation_range(&self) -> core::ops::Range<usize> {
        self.revocation_offset()..self.total()
    }

    fn check_uri(&self, uri: &Uri) -> Result<()> {
        if uri.len() + 1 > self.uri_slots {
            return Err(Error::UriTooLong { len: uri.len(), slots: self.uri_slots });
        }
        Ok(())
    }

    fn fill(&self, slots: &mut [Option<Scalar>], uri: &Uri, time: &TimePath) {
        for (i, c) in uri.components().iter().enumerate() {
            slots[i] = match c {
                UriComponent::Literal(s) => Some(uri_component_hash(s)),
                UriComponent::Any => None,
            };
        }
        if !uri.is_prefix() {
            slots[uri.len()] = Some(terminator_hash());
        }
        let off = self.time_offset();
        for (i, label) in time.labels().into_iter().enumerate() {
            slots[off + i] = label.map(|l| time_label_hash(&l));
        }
    }

    /// Pattern a message on `uri` in time leaf `leaf` is encrypted under.
    /// Revocation slots are left free.
    pub fn message_pattern(&self, uri: &Uri, leaf: &TimePath) -> Result<Pattern> {
        if !uri.is_concrete() {
            return Err(Error::InvalidUri(alloc::format!("`{uri}` has wildcards")));
        }
        self.tree.validate(leaf)?;
        if leaf.len() != self.tree.depth() || leaf.concrete().is_none() {
            return Err(Error::InvalidTime(alloc::format!("`{leaf}` is not a leaf")));
        }
        self.key_pattern(uri, leaf)
    }

    /// Pattern of a key for `uri` (exact, or a prefix if it ends in `*`)
    /// and time subtree `time`.
    pub fn key_pattern(&self, uri: &Uri, time: &TimePath) -> Result<Pattern> {
        self.check_uri(uri)?;
        self.tree.validate(time)?;
        let mut slots = alloc::vec![None; self.total()];
        self.fill(&mut slots, uri, time);
        Pattern::from_slots(slots)
    }

    /// Leaf of the tree holding the hour slot ending at `t`.
    pub fn leaf(&self, t: Hour) -> TimePath {
        self.tree.leaf(t)
    }
}

/// Free-function form of [`Layout::message_pattern`].
pub fn encode_message_pattern(uri: &Uri, leaf: &TimePath, layout: &Layout) -> Result<Pattern> {
    layout.message_pattern(uri, leaf)
}

/// Free-function form of [`Layout::key_pattern`].
pub fn encode_key_pattern(uri: &Uri, time: &TimePath, layout: &Layout) -> Result<Pattern> {
    layout.key_pattern(uri, time)
}

/// Free-function form of [`TimeTree::cover`].
pub fn time_range_cover(range: &TimeRange, tree: &TimeTree) -> Vec<TimePath> {
    tree.cover(range)
}

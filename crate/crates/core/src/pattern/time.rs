//! Calendar time as a tree of labels.
//!
//! Time is measured in whole hours since 1970-01-01T00:00Z (proleptic
//! Gregorian, UTC). A leaf of the tree is one hour-long slot; the slot that
//! ends at instant `T` is labelled with `T`'s hour of day, counting 1..24, so
//! the slot ending at midnight is hour 24 of the day before. A message
//! stamped `T` belongs to that slot, and the range `from..to` consists of the
//! slots ending at `from + 1 ..= to`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::error::{Error, Result};

pub const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

const MIN_YEAR: u32 = 1;
const MAX_YEAR: u32 = 9999;

pub fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

pub fn days_in_month(y: i64, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        _ => 28,
    }
}

/// Days since 1970-01-01 (Howard Hinnant's algorithm).
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

pub fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719468;
    let era = z.div_euclid(146097);
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

/// An instant at the top of an hour, as hours since the Unix epoch.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Hour(pub i64);

impl Hour {
    /// `hour` is the wall-clock hour, 0..=23.
    pub fn from_ymdh(year: i64, month: u32, day: u32, hour: u32) -> Result<Hour> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) || hour > 23 {
            return Err(Error::InvalidTime(alloc::format!("{year:04}-{month:02}-{day:02}T{hour:02}")));
        }
        Ok(Hour(days_from_civil(year, month, day) * 24 + hour as i64))
    }

    /// `(year, month, day, hour 0..=23)`.
    pub fn to_ymdh(self) -> (i64, u32, u32, u32) {
        let (y, m, d) = civil_from_days(self.0.div_euclid(24));
        (y, m, d, self.0.rem_euclid(24) as u32)
    }

    /// `(year, month, day, label 1..=24)` of the slot ending at this instant.
    pub fn slot(self) -> (i64, u32, u32, u32) {
        let (y, m, d, h) = Hour(self.0 - 1).to_ymdh();
        (y, m, d, h + 1)
    }

    fn from_slot(y: i64, m: u32, d: u32, label: u32) -> Hour {
        Hour(days_from_civil(y, m, d) * 24 + label as i64)
    }

    pub fn plus(self, hours: i64) -> Hour {
        Hour(self.0 + hours)
    }
}

impl FromStr for Hour {
    type Err = Error;

    /// Accepts `YYYY-MM-DDTHH`, optionally followed by `:MM`, `:SS` and `Z`;
    /// minutes and seconds are truncated.
    fn from_str(text: &str) -> Result<Hour> {
        let bad = || Error::InvalidTime(text.to_string());
        let s = text.strip_suffix('Z').unwrap_or(text);
        let (date, time) = s.split_once('T').ok_or_else(bad)?;
        let mut it = date.split('-');
        let (Some(y), Some(m), Some(d), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let mut t = time.split(':');
        let h = t.next().ok_or_else(bad)?;
        for rest in t.by_ref().take(2) {
            if rest.len() != 2 || rest.parse::<u32>().map_or(true, |v| v > 59) {
                return Err(bad());
            }
        }
        if t.next().is_some() || y.len() != 4 || m.len() != 2 || d.len() != 2 || h.len() != 2 {
            return Err(bad());
        }
        let num = |v: &str| v.parse::<u32>().map_err(|_| bad());
        Hour::from_ymdh(num(y)? as i64, num(m)?, num(d)?, num(h)?).map_err(|_| bad())
    }
}

impl fmt::Display for Hour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d, h) = self.to_ymdh();
        write!(f, "{y:04}-{m:02}-{d:02}T{h:02}")
    }
}

/// How the year/month/day/hour of a slot are split into tree levels.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Calendar {
    /// year / month name / day / hour, labelled like `2014/Oct/29/23`.
    Depth4,
    /// year / month / 5-day group / day in group / 6-hour group / hour in
    /// group, all decimal.
    Depth6,
}

impl Calendar {
    pub fn levels(self) -> usize {
        match self {
            Calendar::Depth4 => 4,
            Calendar::Depth6 => 6,
        }
    }

    /// Upper bound on a level's label value regardless of the path above it.
    fn max_arity(self, level: usize) -> u32 {
        match (self, level) {
            (_, 0) => MAX_YEAR,
            (_, 1) => 12,
            (Calendar::Depth4, 2) => 31,
            (Calendar::Depth4, _) => 24,
            (Calendar::Depth6, 2) => 7,
            (Calendar::Depth6, 3) => 5,
            (Calendar::Depth6, 4) => 4,
            (Calendar::Depth6, _) => 6,
        }
    }

    /// Number of children of the concrete node `parts`.
    fn arity(self, parts: &[u32]) -> u32 {
        let level = parts.len();
        match (self, level) {
            (_, 1) => 12,
            (Calendar::Depth4, 2) => days_in_month(parts[0] as i64, parts[1]),
            (Calendar::Depth4, _) => 24,
            (Calendar::Depth6, 2) => days_in_month(parts[0] as i64, parts[1]).div_ceil(5),
            (Calendar::Depth6, 3) => (days_in_month(parts[0] as i64, parts[1]) - 5 * (parts[2] - 1)).min(5),
            (Calendar::Depth6, 4) => 4,
            (Calendar::Depth6, _) => 6,
        }
    }

    fn full_parts(self, (y, m, d, label): (i64, u32, u32, u32)) -> Vec<u32> {
        match self {
            Calendar::Depth4 => alloc::vec![y as u32, m, d, label],
            Calendar::Depth6 => {
                alloc::vec![y as u32, m, (d - 1) / 5 + 1, (d - 1) % 5 + 1, (label - 1) / 6 + 1, (label - 1) % 6 + 1,]
            }
        }
    }

    /// First and last slot (as ending instants) under a concrete node.
    fn bounds(self, parts: &[u32]) -> (Hour, Hour) {
        let y = parts[0] as i64;
        let (m_lo, m_hi) = parts.get(1).map_or((1, 12), |&m| (m, m));
        let whole_month = (1, days_in_month(y, m_hi));
        let ((d_lo, d_hi), (l_lo, l_hi)) = match self {
            Calendar::Depth4 => {
                (parts.get(2).map_or(whole_month, |&d| (d, d)), parts.get(3).map_or((1, 24), |&l| (l, l)))
            }
            Calendar::Depth6 => {
                let days = match (parts.get(2), parts.get(3)) {
                    (Some(&g), Some(&dd)) => (5 * (g - 1) + dd, 5 * (g - 1) + dd),
                    (Some(&g), None) => (5 * (g - 1) + 1, (5 * g).min(whole_month.1)),
                    _ => whole_month,
                };
                let labels = match (parts.get(4), parts.get(5)) {
                    (Some(&hg), Some(&hh)) => (6 * (hg - 1) + hh, 6 * (hg - 1) + hh),
                    (Some(&hg), None) => (6 * (hg - 1) + 1, 6 * hg),
                    _ => (1, 24),
                };
                (days, labels)
            }
        };
        (Hour::from_slot(y, m_lo, d_lo, l_lo), Hour::from_slot(y, m_hi, d_hi, l_hi))
    }

    fn format_label(self, level: usize, v: u32, out: &mut String) {
        match (self, level) {
            (Calendar::Depth4, 1) => out.push_str(MONTHS[v as usize - 1]),
            (Calendar::Depth4, 0) => {
                let _ = write!(out, "{v:04}");
            }
            (Calendar::Depth4, _) => {
                let _ = write!(out, "{v:02}");
            }
            (Calendar::Depth6, _) => {
                let _ = write!(out, "{v}");
            }
        }
    }

    fn parse_label(self, level: usize, text: &str) -> Option<u32> {
        let v = match (self, level) {
            (Calendar::Depth4, 1) => MONTHS.iter().position(|m| *m == text)? as u32 + 1,
            (Calendar::Depth4, 0) if text.len() == 4 => text.parse().ok()?,
            (Calendar::Depth4, 2 | 3) if text.len() == 2 => text.parse().ok()?,
            (Calendar::Depth4, _) => return None,
            (Calendar::Depth6, _) => {
                if text.starts_with('0') || text.starts_with('+') {
                    return None;
                }
                text.parse().ok()?
            }
        };
        Some(v)
    }
}

/// A time tree of a given calendar, possibly truncated above the hour level.
///
/// When truncated, leaves are coarser than an hour and covers round partial
/// leaves outward, granting slightly more than requested.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TimeTree {
    calendar: Calendar,
    depth: usize,
}

impl TimeTree {
    pub const DEPTH4: TimeTree = TimeTree { calendar: Calendar::Depth4, depth: 4 };
    pub const DEPTH6: TimeTree = TimeTree { calendar: Calendar::Depth6, depth: 6 };

    pub fn new(calendar: Calendar, depth: usize) -> Result<Self> {
        if depth == 0 || depth > calendar.levels() {
            return Err(Error::InvalidConfig("time tree depth out of range for its calendar"));
        }
        Ok(TimeTree { calendar, depth })
    }

    /// The tree used for a given number of time slots: the hour-resolution
    /// depth-4 tree for 4, the depth-6 tree for 6, truncations otherwise.
    pub fn for_slots(slots: usize) -> Result<Self> {
        match slots {
            1..=4 => TimeTree::new(Calendar::Depth4, slots),
            5 | 6 => TimeTree::new(Calendar::Depth6, slots),
            _ => Err(Error::InvalidConfig("time slots must be between 1 and 6")),
        }
    }

    pub fn calendar(&self) -> Calendar {
        self.calendar
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The leaf containing the slot that ends at `t`.
    pub fn leaf(&self, t: Hour) -> TimePath {
        let mut parts = self.calendar.full_parts(t.slot());
        parts.truncate(self.depth);
        TimePath { calendar: self.calendar, parts: parts.into_iter().map(Some).collect() }
    }

    /// The root path (matches all time).
    pub fn any(&self) -> TimePath {
        TimePath { calendar: self.calendar, parts: Vec::new() }
    }

    /// First and last hour slot (ending instants) under a concrete path.
    pub fn bounds(&self, path: &TimePath) -> Option<(Hour, Hour)> {
        let parts = path.concrete()?;
        if parts.is_empty() {
            return None;
        }
        Some(self.calendar.bounds(&parts))
    }

    /// Parses `2014/Oct/29/23`, `2014/Nov/*`, `+/+/+/08` or `*`.
    pub fn parse_path(&self, text: &str) -> Result<TimePath> {
        let bad = || Error::InvalidTime(text.to_string());
        let mut parts = Vec::new();
        if text != "*" {
            let comps: Vec<&str> = text.split('/').collect();
            for (i, c) in comps.iter().enumerate() {
                if *c == "*" && i + 1 == comps.len() {
                    break;
                }
                if *c == "+" {
                    parts.push(None);
                    continue;
                }
                let level = parts.len();
                if level >= self.depth {
                    return Err(bad());
                }
                parts.push(Some(self.calendar.parse_label(level, c).ok_or_else(bad)?));
            }
            // A full-depth path is written without a trailing `*`.
            if parts.len() == self.depth && comps.last() == Some(&"*") {
                return Err(bad());
            }
            if parts.len() > self.depth {
                return Err(bad());
            }
        }
        let path = TimePath { calendar: self.calendar, parts };
        self.validate(&path).map_err(|_| bad())?;
        Ok(path)
    }

    pub fn validate(&self, path: &TimePath) -> Result<()> {
        let bad = || Error::InvalidTime(path.to_string());
        if path.calendar != self.calendar || path.parts.len() > self.depth {
            return Err(bad());
        }
        let mut concrete = true;
        for (level, p) in path.parts.iter().enumerate() {
            let Some(v) = *p else {
                concrete = false;
                continue;
            };
            let hi = if concrete && level > 0 {
                let prefix: Vec<u32> = path.parts[..level].iter().map(|p| p.expect("concrete")).collect();
                self.calendar.arity(&prefix)
            } else {
                self.calendar.max_arity(level)
            };
            let lo = if level == 0 { MIN_YEAR } else { 1 };
            if v < lo || v > hi {
                return Err(bad());
            }
        }
        Ok(())
    }

    /// Children of a concrete node above the leaves; empty for leaves, for
    /// the root (years are unbounded) and for paths containing `+`.
    pub fn children_of(&self, path: &TimePath) -> Vec<TimePath> {
        match path.concrete() {
            Some(parts) if !parts.is_empty() && parts.len() < self.depth => self
                .children(&parts)
                .map(|c| TimePath { calendar: self.calendar, parts: c.into_iter().map(Some).collect() })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Concrete children of a concrete non-leaf node.
    fn children(&self, parts: &[u32]) -> impl Iterator<Item = Vec<u32>> + '_ {
        let prefix = parts.to_vec();
        (1..=self.calendar.arity(parts)).map(move |c| {
            let mut p = prefix.clone();
            p.push(c);
            p
        })
    }

    /// Minimal set of disjoint subtrees whose leaves are exactly the range.
    /// On a truncated tree, leaves partially inside the range are included.
    pub fn cover(&self, range: &TimeRange) -> Vec<TimePath> {
        let mut out = Vec::new();
        let y0 = range.first.slot().0;
        let y1 = range.last.slot().0;
        for y in y0..=y1 {
            if !(MIN_YEAR as i64..=MAX_YEAR as i64).contains(&y) {
                continue;
            }
            self.cover_into(alloc::vec![y as u32], range, &mut out);
        }
        out
    }

    fn cover_into(&self, node: Vec<u32>, range: &TimeRange, out: &mut Vec<TimePath>) {
        let (lo, hi) = self.calendar.bounds(&node);
        if hi < range.first || lo > range.last {
            return;
        }
        if node.len() == self.depth || (range.first <= lo && hi <= range.last) {
            out.push(TimePath { calendar: self.calendar, parts: node.into_iter().map(Some).collect() });
            return;
        }
        for child in self.children(&node) {
            self.cover_into(child, range, out);
        }
    }
}

/// A node of the time tree. Shorter than the tree depth means the whole
/// subtree; `None` components stand for `+` (any value at that level).
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct TimePath {
    calendar: Calendar,
    parts: Vec<Option<u32>>,
}

impl TimePath {
    /// Unvalidated; check with [`TimeTree::validate`].
    pub fn from_parts(calendar: Calendar, parts: Vec<Option<u32>>) -> Self {
        TimePath { calendar, parts }
    }

    pub fn calendar(&self) -> Calendar {
        self.calendar
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[Option<u32>] {
        &self.parts
    }

    /// Label text per level; `None` for `+`.
    pub fn labels(&self) -> Vec<Option<String>> {
        self.parts
            .iter()
            .enumerate()
            .map(|(level, p)| {
                p.map(|v| {
                    let mut s = String::new();
                    self.calendar.format_label(level, v, &mut s);
                    s
                })
            })
            .collect()
    }

    /// The values if no component is `+`.
    pub fn concrete(&self) -> Option<Vec<u32>> {
        self.parts.iter().copied().collect()
    }

    /// True iff `leaf` lies in this subtree (with `+` matching anything).
    pub fn matches(&self, leaf: &TimePath) -> bool {
        self.calendar == leaf.calendar
            && self.parts.len() <= leaf.parts.len()
            && self.parts.iter().zip(&leaf.parts).all(|(a, b)| a.is_none() || a == b)
    }
}

impl fmt::Display for TimePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = self.labels();
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(l.as_deref().unwrap_or("+"))?;
        }
        // Whether the path is a leaf depends on the tree; a trailing `*` is
        // written for anything shorter than the calendar's full depth.
        if self.parts.len() < self.calendar.levels() {
            if !self.parts.is_empty() {
                f.write_str("/")?;
            }
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl TimePath {
    /// Display relative to a possibly truncated tree: no `*` on its leaves.
    pub fn display_in(&self, tree: &TimeTree) -> String {
        let s = self.to_string();
        if self.parts.len() == tree.depth && self.parts.len() < self.calendar.levels() {
            s.trim_end_matches("/*").to_string()
        } else {
            s
        }
    }
}

/// Inclusive range of hour slots, identified by their ending instants.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TimeRange {
    pub first: Hour,
    pub last: Hour,
}

impl TimeRange {
    pub fn new(first: Hour, last: Hour) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidTime(alloc::format!("empty range {first}..{last}")));
        }
        Ok(TimeRange { first, last })
    }

    /// Everything from instant `from` until instant `to`.
    pub fn between(from: Hour, to: Hour) -> Result<Self> {
        if from >= to {
            return Err(Error::InvalidTime(alloc::format!("range {from}..{to} is empty")));
        }
        TimeRange::new(from.plus(1), to)
    }

    /// The single slot ending at `t`.
    pub fn hour(t: Hour) -> Self {
        TimeRange { first: t, last: t }
    }

    pub fn contains(&self, t: Hour) -> bool {
        self.first <= t && t <= self.last
    }

    pub fn hours(&self) -> i64 {
        self.last.0 - self.first.0 + 1
    }
}

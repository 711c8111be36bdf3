use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Reserved component marking the end of an exact URI.
pub const TERMINATOR: &str = "$";

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum UriComponent {
    Literal(String),
    /// `+`: any single component.
    Any,
}

/// A resource path such as `buildingA/floor2/temp`.
///
/// Filters may contain `+` in any position and a trailing `*`, which makes
/// the URI a prefix covering every extension of it (including itself).
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Uri {
    components: Vec<UriComponent>,
    prefix: bool,
}

impl Uri {
    pub fn parse(text: &str) -> Result<Self> {
        let mut components = Vec::new();
        let mut prefix = false;
        if text.is_empty() {
            return Ok(Uri { components, prefix });
        }
        let parts: Vec<&str> = text.split('/').collect();
        for (i, part) in parts.iter().enumerate() {
            match *part {
                "" => return Err(Error::InvalidUri(format_err("empty component in", text))),
                TERMINATOR => return Err(Error::InvalidUri(format_err("reserved component `$` in", text))),
                "*" if i + 1 == parts.len() => prefix = true,
                "*" => return Err(Error::InvalidUri(format_err("`*` before the end of", text))),
                "+" => components.push(UriComponent::Any),
                lit => components.push(UriComponent::Literal(lit.to_string())),
            }
        }
        Ok(Uri { components, prefix })
    }

    /// A concrete URI from literal components.
    pub fn from_components<S: AsRef<str>>(parts: &[S]) -> Result<Self> {
        let mut components = Vec::with_capacity(parts.len());
        for p in parts {
            let p = p.as_ref();
            if p.is_empty() || p == TERMINATOR || p == "*" || p == "+" || p.contains('/') {
                return Err(Error::InvalidUri(format_err("bad component", p)));
            }
            components.push(UriComponent::Literal(p.to_string()));
        }
        Ok(Uri { components, prefix: false })
    }

    pub fn components(&self) -> &[UriComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_prefix(&self) -> bool {
        self.prefix
    }

    /// No `*` and no `+`: a URI a message can be published to.
    pub fn is_concrete(&self) -> bool {
        !self.prefix && self.components.iter().all(|c| matches!(c, UriComponent::Literal(_)))
    }

    /// The same components as a prefix filter (`.../*`).
    pub fn as_prefix(&self) -> Uri {
        Uri { components: self.components.clone(), prefix: true }
    }
}

fn format_err(what: &str, text: &str) -> String {
    let mut s = String::from(what);
    s.push_str(" `");
    s.push_str(text);
    s.push('`');
    s
}

impl FromStr for Uri {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Uri::parse(s)
    }
}

impl fmt::Display for Uri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match c {
                UriComponent::Literal(s) => f.write_str(s)?,
                UriComponent::Any => f.write_str("+")?,
            }
        }
        if self.prefix {
            if !self.components.is_empty() {
                f.write_str("/")?;
            }
            f.write_str("*")?;
        }
        Ok(())
    }
}

/// Subscription matching: `+` matches one component, a trailing `*` matches
/// any (possibly empty) suffix.
///
/// `+` components directly before a `*` may also match nothing, so `a/+/*`
/// matches `a`. This mirrors the pattern encoding, where such components
/// and the terminator position are all free slots.
pub fn matches_uri(filter: &Uri, concrete: &Uri) -> bool {
    let n = filter.components.len();
    let len_ok = if filter.prefix {
        let required = filter.components.iter().rposition(|c| *c != UriComponent::Any).map_or(0, |i| i + 1);
        concrete.components.len() >= required
    } else {
        concrete.components.len() == n
    };
    len_ok
        && filter.components.iter().zip(&concrete.components).all(|(f, c)| match (f, c) {
            (UriComponent::Any, _) => true,
            (UriComponent::Literal(a), UriComponent::Literal(b)) => a == b,
            (UriComponent::Literal(_), UriComponent::Any) => false,
        })
}

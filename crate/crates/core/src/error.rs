use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core library.
///
/// The `Display` form of every variant starts with the variant name so the
/// command-line tool can surface it verbatim.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("InvalidLength: {0}")]
    InvalidLength(&'static str),
    #[error("MalformedEncoding: {0}")]
    MalformedEncoding(&'static str),
    #[error("NotAMatch: key pattern does not match the target pattern")]
    NotAMatch,
    #[error("NotExtendable: key lacks the elements needed to fix slot {0}")]
    NotExtendable(usize),
    #[error("PatternMismatch: key and ciphertext patterns differ")]
    PatternMismatch,
    #[error("NoSignatureSlot: parameters or key carry no signature slot")]
    NoSignatureSlot,
    #[error("NonDelegable: un-resampled keys cannot be exported")]
    NonDelegable,
    #[error("UriTooLong: {len} components do not fit in {slots} URI slots")]
    UriTooLong { len: usize, slots: usize },
    #[error("InvalidUri: {0}")]
    InvalidUri(String),
    #[error("InvalidTime: {0}")]
    InvalidTime(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(&'static str),
    #[error("InsufficientAuthority: uncovered {}", .uncovered.join(", "))]
    InsufficientAuthority { uncovered: Vec<String> },
    #[error("MalformedKey: delegated key fails the well-formedness check")]
    MalformedKey,
    #[error("NoMatchingKey: no stored key covers this URI and time")]
    NoMatchingKey,
    #[error("AuthFailure: payload authentication failed")]
    AuthFailure,
    #[error("MalformedCiphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("NoSigningAuthority: no stored key can sign for this URI and time")]
    NoSigningAuthority,
    #[error("ChainExhausted: hash chain has no keys left")]
    ChainExhausted,
    #[error("IndexOutOfOrder: message index {got} is not after {last}")]
    IndexOutOfOrder { got: u32, last: u32 },
    #[error("OutOfRange: leaf range is not contained in the parent range")]
    OutOfRange,
    #[error("Revoked: every leaf held by this key is revoked")]
    Revoked,
    #[error("UnknownHierarchy: object belongs to a different hierarchy")]
    UnknownHierarchy,
}

impl Error {
    /// The bare variant name, e.g. `"NoMatchingKey"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidLength(_) => "InvalidLength",
            Error::MalformedEncoding(_) => "MalformedEncoding",
            Error::NotAMatch => "NotAMatch",
            Error::NotExtendable(_) => "NotExtendable",
            Error::PatternMismatch => "PatternMismatch",
            Error::NoSignatureSlot => "NoSignatureSlot",
            Error::NonDelegable => "NonDelegable",
            Error::UriTooLong { .. } => "UriTooLong",
            Error::InvalidUri(_) => "InvalidUri",
            Error::InvalidTime(_) => "InvalidTime",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InsufficientAuthority { .. } => "InsufficientAuthority",
            Error::MalformedKey => "MalformedKey",
            Error::NoMatchingKey => "NoMatchingKey",
            Error::AuthFailure => "AuthFailure",
            Error::MalformedCiphertext(_) => "MalformedCiphertext",
            Error::NoSigningAuthority => "NoSigningAuthority",
            Error::ChainExhausted => "ChainExhausted",
            Error::IndexOutOfOrder { .. } => "IndexOutOfOrder",
            Error::OutOfRange => "OutOfRange",
            Error::Revoked => "Revoked",
            Error::UnknownHierarchy => "UnknownHierarchy",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

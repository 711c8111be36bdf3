use std::io;
use std::path::PathBuf;

/// Errors surfaced by the tool. Core errors keep their own names; the
/// `Display` form always starts with the error name.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] jedi_core::Error),
    #[error("MalformedFile: {0}")]
    MalformedFile(String),
    #[error("Io: {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("ScenarioConfigError: {0}")]
    Scenario(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("VerificationFailed: {0}")]
    VerificationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Exit status for successful commands.
pub const EXIT_OK: i32 = 0;
/// The caller lacks the authority or key to do what was asked.
pub const EXIT_UNAUTHORIZED: i32 = 2;
/// An input file, argument or configuration is malformed.
pub const EXIT_MALFORMED: i32 = 3;
/// A cryptographic check failed.
pub const EXIT_CRYPTO: i32 = 4;

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::Core(e) => e.name(),
            Error::MalformedFile(_) => "MalformedFile",
            Error::Io { .. } => "Io",
            Error::Scenario(_) => "ScenarioConfigError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::VerificationFailed(_) => "VerificationFailed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use jedi_core::Error as C;
        match self {
            Error::Core(
                C::InsufficientAuthority { .. }
                | C::NoMatchingKey
                | C::Revoked
                | C::NotAMatch
                | C::NotExtendable(_)
                | C::NonDelegable
                | C::OutOfRange
                | C::NoSigningAuthority,
            ) => EXIT_UNAUTHORIZED,
            Error::Core(C::AuthFailure | C::ChainExhausted | C::IndexOutOfOrder { .. }) => EXIT_CRYPTO,
            Error::VerificationFailed(_) => EXIT_CRYPTO,
            _ => EXIT_MALFORMED,
        }
    }
}

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

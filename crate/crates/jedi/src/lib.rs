//! Tooling around `jedi-core`: file containers, an in-process broker,
//! scripted scenarios, microbenchmarks and the `jedi` command.

pub mod bench;
pub mod broker;
pub mod cli;
pub mod error;
pub mod files;
pub mod scenario;

pub use error::{Error, Result};

//! Core of the JEDI end-to-end encryption protocol for publish-subscribe
//! systems.
//!
//! Messages are published to hierarchical URIs and encrypted so that only
//! holders of a key for a covering URI prefix and time range can read them.
//! Keys can be re-delegated without contacting the hierarchy's authority,
//! expire by construction, and can optionally be revoked immediately.
//!
//! Layers, bottom up:
//!
//! * [`groups`]: the BLS12-381 pairing backend and hash-to-scalar.
//! * [`wkdibe`]: wildcarded key-derivation IBE, its signatures and the
//!   precompute/adjust fast paths.
//! * [`pattern`]: URI and calendar-time encodings into WKD-IBE patterns,
//!   and logarithmic time-range covers.
//! * [`revocation`]: delegable complete-subtree revocation over a third
//!   pattern hierarchy.
//! * [`protocol`]: key stores, delegation, hybrid encryption with key reuse,
//!   epoch integrity chains and forward-secrecy ratcheting.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, the broker simulator and the command-line tool
//! live in the `jedi` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod groups;
pub mod metrics;
pub mod pattern;
pub mod protocol;
pub mod revocation;
pub mod wire;
pub mod wkdibe;

pub use error::{Error, Result};
pub use groups::{hash_to_scalar, Gt, Scalar, G1, G2};
pub use wkdibe::{MasterKey, Params, Pattern, SecretKey, Signature, WkdCiphertext};

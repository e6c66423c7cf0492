//! Simulation of two three-level atoms coupled to a single cavity mode at
//! two-photon resonance.
//!
//! The crate builds the full and effective Hamiltonians, propagates states
//! exactly and through the large-photon-number analytic solutions, and runs
//! the GHZ-generation and two-cavity atomic Bell-measurement protocols with
//! ideal or balanced-homodyne field detection.

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod models;
pub mod protocols;

pub use error::{Error, Result};
pub use hilbert::C64;

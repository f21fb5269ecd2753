//! Finite-size key rates for DPSK quantum key distribution.
//!
//! The library evaluates variable-length key rates through the relativistic
//! two-pulse protocol, whose key rate lower-bounds DPSK. The pipeline is:
//!
//! 1. [`channel`] computes the honest statistics `q` over the announcement
//!    alphabet `{⊥, CC, WC, NC}` for a lossy, noisy fiber.
//! 2. [`conic::solve_tradeoff`] finds a tradeoff function `f` for `q`.
//! 3. [`conic::solve_kappa`] certifies the normalization constant `κ(f)`
//!    over all no-signaling-feasible attacks.
//! 4. [`engine`] turns `n(f·q + κ)` into an expected key length with error
//!    correction and privacy amplification costs.

pub mod channel;
pub mod conic;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod optim;
pub mod params;
pub mod renyi;

pub use error::{Error, Result};

//! Immersion-coded federated learning.
//!
//! Model parameters `w ∈ Rⁿ` are lifted by the server into a higher
//! dimensional space with an affine map `w̃ = Π1·w + N1·r1`, where the noise
//! `N1·r1` lives in the kernel of the left inverse `Π1ᴸ`. Clients train
//! directly on the lifted vector with an immersed optimizer
//! `w̃ ← w̃ − Π1·g(Π1ᴸ·w̃)`, the untrusted aggregator averages lifted vectors
//! (and optionally widens them with its own map `w̃·Π2 + R2·N2`), and the
//! server recovers the exact plaintext aggregate with `Π1ᴸ`. The kernel
//! noise cancels exactly in exact arithmetic; in floating point the decoded
//! model picks up an error of roughly `ε_mach·κ(Π1)·σ`, so large noise
//! levels call for well-conditioned keys.
//!
//! Module map:
//!
//! - [`coding`]: key generation, encode/decode maps, validation, key files.
//! - [`optim`]: SGD/Momentum/Adam steps, plaintext and immersed local runs.
//! - [`model`] and [`data`]: desk-scale models with analytic gradients,
//!   datasets and IID partitioning.
//! - [`dp`]: sensitivities, Laplace/Gaussian privacy conditions, the
//!   Q-function, noise samplers.
//! - [`protocol`]: server/aggregator/client roles, wire format, transports
//!   and round orchestration.
//! - [`harness`]: experiment configuration, metrics, equivalence and timing
//!   reports.

// `!(x <= y)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod data;
pub mod dp;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};

/// Flattened plaintext model parameters.
pub type ModelVector = nalgebra::DVector<f64>;

//! Nash-equilibrium seeking for aggregative games under Laplace noise,
//! with privacy accounting on both sides of the ledger.
//!
//! The crate has three layers:
//!
//! * [`game`] and [`engine`] — cost models, constraint sets, and the noisy
//!   broadcast dynamics that drive strategies toward equilibrium. Replaying
//!   a recorded broadcast sequence is bit-exact, which everything else
//!   leans on.
//! * [`privacy`] — what the broadcasts reveal: exact pointwise maximal
//!   leakage on discrete priors, sampled upper bounds from replay
//!   sensitivities, adjacency certificates, and closed-form schedule
//!   bounds, including the correlated-prior lower/upper envelope.
//! * [`adversary`] — an honest-but-curious attacker that fits cost
//!   parameters from the broadcasts alone, measuring in practice what the
//!   bounds promise on paper.
//!
//! All randomness flows through explicitly seeded ChaCha20 generators, so
//! every run, bound, and attack is reproducible from its seed.

pub mod adversary;
pub mod engine;
pub mod error;
pub mod game;
pub mod numeric;
pub mod privacy;

pub use error::{Error, Result};

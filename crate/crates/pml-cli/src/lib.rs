//! Experiment driver around the core library: a TOML-configured CLI that
//! runs the noisy dynamics, computes leakage bounds and certificates, runs
//! the parameter-recovery attack, regenerates the bundled studies, and
//! searches for budget-versus-leakage separation instances.
//!
//! All artifacts are written atomically, validated by a read-back round
//! trip, and carry a manifest with the effective configuration and every
//! seed used, so any emitted number is reproducible from the output
//! directory alone.

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;

//! Leakage accounting for the broadcast channel.
//!
//! Layered as: priors over cost profiles ([`prior`]), sampled observation
//! sets and closed-form/sampled leakage bounds ([`bounds`]), exact leakage
//! on enumerable priors ([`leakage`]), and an assembled summary ([`report`]).

pub mod bounds;
pub mod leakage;
pub mod prior;
pub mod report;

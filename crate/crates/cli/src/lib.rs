//! Batch driver for the interferometric QKD simulator.
//!
//! [`config`] resolves a run description from a JSON file plus command-line
//! overrides; [`sweep`] executes it — a Monte Carlo sweep over mean photon
//! numbers through session, sifting, reconciliation, and privacy
//! amplification — or evaluates the closed-form rate curve on a μ grid, and
//! serializes either as deterministic CSV.

pub mod config;
pub mod sweep;

//! Simulation library for an autocompensating phase-coded quantum key
//! distribution link.
//!
//! The crate is layered bottom-up:
//!
//! - [`jones`] — polarization states, Jones matrices, the reciprocal
//!   reverse-propagation rule and the Faraday-mirror round-trip algebra that
//!   makes the link self-compensating;
//! - [`optics`] — the two receiver bench models (bulk optics with waveplate
//!   misalignment, all-fiber with coupler imbalance) reduced to detector
//!   routing probabilities as a function of differential phase;
//! - [`protocol`] — per-slot basis/bit choices, phase encodings, sifting,
//!   the classical message vocabulary and full session orchestration;
//! - [`channel`] — the pulse-level Monte Carlo channel (Poisson source,
//!   lumped losses, backscatter, dark counts) plus closed-form expectations;
//! - [`distill`] — reconciliation, leak estimation and privacy
//!   amplification with exact disclosure accounting.
//!
//! The optical layers are generic over the scalar type (any [`num_traits`]
//! float works; `f32` trades accuracy for speed); the protocol and
//! statistics layers are concrete in `f64`. The aliases below pin the
//! common double-precision instantiations.

pub mod channel;
pub mod distill;
pub mod jones;
pub mod optics;
pub mod protocol;

/// Double-precision polarization state.
pub type PolarizationState64 = jones::PolarizationState<f64>;
/// Double-precision Jones matrix.
pub type JonesMatrix64 = jones::JonesMatrix<f64>;
/// Double-precision reciprocal optical element.
pub type ReciprocalElement64 = jones::ReciprocalElement<f64>;
/// Double-precision Faraday rotator.
pub type FaradayRotator64 = jones::FaradayRotator<f64>;
/// Double-precision bulk receiver bench.
pub type BulkBench64 = optics::BulkBench<f64>;
/// Double-precision fiber receiver bench.
pub type FiberBench64 = optics::FiberBench<f64>;
/// Double-precision modulator phase settings.
pub type PhaseSettings64 = optics::PhaseSettings<f64>;
/// Double-precision detector routing probabilities.
pub type RoutingProbabilities64 = optics::RoutingProbabilities<f64>;

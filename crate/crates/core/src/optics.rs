//! Interferometric bench models: differential-phase readout and detector
//! routing for the bulk-optic (waveplate + polarizing beamsplitter) and
//! all-fiber (2×2 coupler) analysis stages.
//!
//! Both parties encode information as a differential phase Δφ between a
//! pulse pair. After recombination the analysis stage routes the light
//! between detectors `D0` and `D1`:
//!
//! * Δφ an even multiple of π/2 → all light to `D0`;
//! * Δφ an odd multiple of π/2 → all light to `D1`.
//!
//! Imperfections blur the odd-multiple settings: a half-waveplate rotated by
//! `δ` away from its ideal π/8 leaks `sin²(4δ)` of the intensity to the
//! wrong detector there, and an unbalanced fiber coupler leaks
//! `(t² − rc²)²` in the same way. Even-multiple settings stay exact in both
//! models. Detector labels follow the routing amplitudes; the leakage lands
//! on whichever port should have been dark.

use num_complex::Complex;
use num_traits::{Float, FloatConst, One};
use thiserror::Error;

use crate::jones::{faraday_mirror, JonesMatrix};

/// Construction failures for bench descriptions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    /// Waveplate misalignment must satisfy `|δ| < π/8`; beyond that the
    /// small-misalignment analysis (and the bench itself) is meaningless.
    #[error("waveplate misalignment {delta} rad out of range (|δ| < π/8)")]
    MisalignmentTooLarge { delta: f64 },
    /// Coupler amplitude coefficients must lie in `[0, 1]`.
    #[error("coupler coefficients t={t}, rc={rc} outside [0, 1]")]
    CouplerCoefficientOutOfRange { t: f64, rc: f64 },
    /// A lossless coupler needs `t² + rc² = 1`.
    #[error("coupler coefficients t={t}, rc={rc} violate t²+rc²=1 (norm {norm})")]
    CouplerNotLossless { t: f64, rc: f64, norm: f64 },
    /// Power split fractions must lie in `[0, 1]`.
    #[error("power split fraction {split} outside [0, 1]")]
    InvalidPowerSplit { split: f64 },
    /// Switching contrast must be at least 1:1.
    #[error("switching contrast {contrast} must be ≥ 1")]
    InvalidContrast { contrast: f64 },
}

/// Entrywise construction tolerance, scaled to the scalar's precision:
/// ~1e-12 at double precision and proportionally looser at single.
fn construction_tolerance<T: Float>() -> T {
    T::epsilon() * T::from(4500.0).expect("tolerance scale")
}

fn to_f64<T: Float>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Reduces an angle to the principal interval `(−π, π]`.
pub fn wrap_phase<T: Float + FloatConst>(phi: T) -> T {
    let tau = T::TAU();
    let pi = T::PI();
    let mut x = phi % tau;
    if x > pi {
        x = x - tau;
    } else if x <= -pi {
        x = x + tau;
    }
    x
}

/// The four modulator phases of one pulse-pair exchange: Alice's and Bob's
/// settings for the early (`H`-labeled) and late (`V`-labeled) pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSettings<T> {
    pub phi_ah: T,
    pub phi_av: T,
    pub phi_bh: T,
    pub phi_bv: T,
}

impl<T: Float + FloatConst> PhaseSettings<T> {
    /// Stores the four phases, each reduced to `(−π, π]`.
    pub fn new(phi_ah: T, phi_av: T, phi_bh: T, phi_bv: T) -> Self {
        Self {
            phi_ah: wrap_phase(phi_ah),
            phi_av: wrap_phase(phi_av),
            phi_bh: wrap_phase(phi_bh),
            phi_bv: wrap_phase(phi_bv),
        }
    }

    /// The standard operating convention: Alice modulates only the late
    /// pulse on its way out (`phi_av = phi_a`), Bob modulates only the
    /// returning early pulse (`phi_bh = phi_b`), and the other two phases
    /// are zero, giving `Δφ = (phi_a − phi_b) / 2`.
    pub fn from_alice_bob(phi_a: T, phi_b: T) -> Self {
        Self::new(T::zero(), phi_a, phi_b, T::zero())
    }
}

/// Differential phase `Δφ = ((φ_AV + φ_BV) − (φ_AH + φ_BH)) / 2`, reduced to
/// `(−π, π]`. This is the only combination of the four phases that affects
/// detector routing; the common-mode sum only shifts a global phase.
pub fn differential_phase<T: Float + FloatConst>(s: &PhaseSettings<T>) -> T {
    let two = T::one() + T::one();
    wrap_phase(((s.phi_av + s.phi_bv) - (s.phi_ah + s.phi_bh)) / two)
}

/// How one pulse pair's intensity divides between the two detectors.
/// Normalized: `p_d0 + p_d1 = 1` (losses live elsewhere).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoutingProbabilities<T> {
    pub p_d0: T,
    pub p_d1: T,
}

/// Shared routing kernel. The recombined amplitudes are
/// `D1: sinΔφ · s4` and `D0: cosΔφ − i·sinΔφ · c4`, where `(s4, c4)` is
/// `(sin 4θ, cos 4θ)` for the bulk bench and `(2·t·rc, t² − rc²)` for the
/// fiber coupler.
fn route_components<T: Float + FloatConst>(dphi: T, s4: T, c4: T) -> RoutingProbabilities<T> {
    let (sd, cd) = dphi.sin_cos();
    let to_d1 = sd * sd * s4 * s4;
    let to_d0 = cd * cd + sd * sd * c4 * c4;
    let total = to_d0 + to_d1;
    RoutingProbabilities { p_d0: to_d0 / total, p_d1: to_d1 / total }
}

/// The bulk-optic analysis stage: a half-waveplate at `θ = π/8 + δ` in
/// front of the recombining polarizing beamsplitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BulkBench<T> {
    theta: T,
    loss_scalar: Complex<T>,
}

impl<T: Float + FloatConst> BulkBench<T> {
    /// Perfectly aligned waveplate (`θ = π/8`), unit loss scalar.
    pub fn ideal() -> Self {
        Self { theta: T::FRAC_PI_8(), loss_scalar: Complex::one() }
    }

    /// Waveplate rotated `delta` radians away from ideal. Rejects
    /// `|delta| ≥ π/8`, where the analysis stage no longer separates the
    /// settings at all.
    pub fn with_misalignment(delta: T) -> Result<Self, OpticsError> {
        // Negated comparison so NaN also lands on the rejection path.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(delta.abs() < T::FRAC_PI_8()) {
            return Err(OpticsError::MisalignmentTooLarge { delta: to_f64(delta) });
        }
        Ok(Self { theta: T::FRAC_PI_8() + delta, loss_scalar: Complex::one() })
    }

    /// Replaces the combined attenuation/static-phase scalar. It never
    /// affects routing probabilities; it is carried for round-trip traces.
    pub fn with_loss(mut self, loss_scalar: Complex<T>) -> Self {
        self.loss_scalar = loss_scalar;
        self
    }

    /// Waveplate angle `θ`.
    pub fn theta(&self) -> T {
        self.theta
    }

    /// Misalignment `δ = θ − π/8`.
    pub fn delta(&self) -> T {
        self.theta - T::FRAC_PI_8()
    }

    pub fn loss_scalar(&self) -> Complex<T> {
        self.loss_scalar
    }
}

/// The all-fiber analysis stage: a 2×2 coupler with amplitude transmission
/// `t` and reflection `rc` (`t² + rc² = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberBench<T> {
    t: T,
    rc: T,
    loss_scalar: Complex<T>,
}

impl<T: Float + FloatConst> FiberBench<T> {
    /// Validates `t, rc ∈ [0, 1]` and `t² + rc² = 1` (within a tolerance
    /// scaled to the scalar's precision).
    pub fn new(t: T, rc: T) -> Result<Self, OpticsError> {
        if !(T::zero()..=T::one()).contains(&t) || !(T::zero()..=T::one()).contains(&rc) {
            return Err(OpticsError::CouplerCoefficientOutOfRange {
                t: to_f64(t),
                rc: to_f64(rc),
            });
        }
        let norm = t * t + rc * rc;
        if (norm - T::one()).abs() > construction_tolerance() {
            return Err(OpticsError::CouplerNotLossless {
                t: to_f64(t),
                rc: to_f64(rc),
                norm: to_f64(norm),
            });
        }
        Ok(Self { t, rc, loss_scalar: Complex::one() })
    }

    /// The ideal 50:50 coupler.
    pub fn balanced() -> Self {
        let half = T::from(0.5).expect("0.5 representable");
        Self { t: half.sqrt(), rc: half.sqrt(), loss_scalar: Complex::one() }
    }

    /// Builds the coupler from its transmitted power fraction `t²`
    /// (e.g. `0.55` for a 55:45 power split). The split must lie strictly
    /// between 0 and 1 — at the endpoints one arm goes dark and the bench
    /// stops interfering.
    pub fn from_power_split(split: T) -> Result<Self, OpticsError> {
        if !(split.is_finite() && split > T::zero() && split < T::one()) {
            return Err(OpticsError::InvalidPowerSplit { split: to_f64(split) });
        }
        Ok(Self { t: split.sqrt(), rc: (T::one() - split).sqrt(), loss_scalar: Complex::one() })
    }

    /// Builds the coupler with a given power imbalance `t² − rc²`.
    pub fn from_imbalance(imbalance: T) -> Result<Self, OpticsError> {
        let half = T::from(0.5).expect("0.5 representable");
        Self::from_power_split(half * (T::one() + imbalance))
    }

    /// See [`BulkBench::with_loss`].
    pub fn with_loss(mut self, loss_scalar: Complex<T>) -> Self {
        self.loss_scalar = loss_scalar;
        self
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn rc(&self) -> T {
        self.rc
    }

    pub fn loss_scalar(&self) -> Complex<T> {
        self.loss_scalar
    }

    /// Power imbalance `t² − rc²`.
    pub fn imbalance(&self) -> T {
        self.t * self.t - self.rc * self.rc
    }

    /// Fraction of intensity leaking to the wrong detector at the nulls
    /// (Δφ an odd multiple of π/2): `(t² − rc²)²`. Zero for a balanced
    /// coupler; `0.01` for a 55:45 power split.
    pub fn null_leakage(&self) -> T {
        let im = self.imbalance();
        im * im
    }

    /// Switching contrast between the bright and dark port at the nulls,
    /// `1 / null_leakage` (infinite for a balanced coupler).
    pub fn switching_contrast(&self) -> T {
        T::one() / self.null_leakage()
    }
}

/// The coupler imbalance `|t² − rc²|` required to hold a given switching
/// contrast, i.e. `contrast^{−1/2}`; 650:1 needs ≈ 0.0392 (a 51.96:48.04
/// power split).
pub fn required_imbalance_for_contrast<T: Float + FloatConst>(
    contrast: T,
) -> Result<T, OpticsError> {
    // Negated comparison so NaN also lands on the rejection path.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(contrast >= T::one()) {
        return Err(OpticsError::InvalidContrast { contrast: to_f64(contrast) });
    }
    Ok(contrast.sqrt().recip())
}

/// Detector routing for the bulk bench: squared moduli of the recombined
/// amplitudes at waveplate angle `θ`, normalized. At ideal alignment,
/// `p_d0 = cos²Δφ` and `p_d1 = sin²Δφ`; with misalignment `δ` the fraction
/// `sin²(4δ)` strays to `D0` when Δφ is an odd multiple of π/2, while even
/// multiples still route perfectly.
pub fn bulk_routing<T: Float + FloatConst>(dphi: T, bench: &BulkBench<T>) -> RoutingProbabilities<T> {
    let four_theta = bench.theta * T::from(4.0).expect("4 representable");
    let (s4, c4) = four_theta.sin_cos();
    route_components(dphi, s4, c4)
}

/// Detector routing for the fiber bench: the bulk amplitudes with
/// `sin 4θ → 2·t·rc` and `cos 4θ → t² − rc²`. The substitution is exact,
/// so an unbalanced coupler behaves like a misaligned waveplate with
/// `(t² − rc²)²` in place of `sin²(4δ)`.
pub fn fiber_routing<T: Float + FloatConst>(dphi: T, bench: &FiberBench<T>) -> RoutingProbabilities<T> {
    let two = T::one() + T::one();
    route_components(dphi, two * bench.t * bench.rc, bench.imbalance())
}

/// The Jones matrix of Alice's whole reflection assembly (splitter, phase
/// modulator loop, Faraday mirror, attenuation): a Faraday mirror scaled by
/// `loss · e^{i(static_phase + phi_a)}`. `phi_a` is the phase her modulator
/// applies to the pulse currently in the loop; `static_phase` collects the
/// fixed birefringence of the loop fibers.
pub fn effective_faraday_mirror<T: Float + FloatConst>(
    phi_a: T,
    static_phase: T,
    loss: Complex<T>,
) -> JonesMatrix<T> {
    let phase = Complex::new(T::zero(), static_phase + phi_a).exp();
    faraday_mirror().scaled(loss * phase)
}

/// Mean fraction of intensity misrouted by a waveplate misalignment `δ`,
/// averaged over the four matched-basis phase settings: `sin²(4δ) / 2`.
///
/// Two of the four settings sit at even multiples of π/2 and are immune, so
/// the average is half the worst case; at `δ = 2°` this contributes ≈ 1%
/// to the bit error rate while the worst-case settings misroute ≈ 2%.
pub fn average_misrouting<T: Float + FloatConst>(delta: T) -> Result<T, OpticsError> {
    // Negated comparison so NaN also lands on the rejection path.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(delta.abs() < T::FRAC_PI_8()) {
        return Err(OpticsError::MisalignmentTooLarge { delta: to_f64(delta) });
    }
    let four = T::from(4.0).expect("4 representable");
    let two = T::one() + T::one();
    let s = (four * delta).sin();
    Ok(s * s / two)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn wrap_phase_hits_the_principal_interval() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_phase(-1.5 * PI), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn differential_phase_of_quiet_modulators_is_zero() {
        let s = PhaseSettings::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(differential_phase(&s), 0.0);
    }

    #[test]
    fn differential_phase_is_half_the_late_pulse_phase() {
        let s = PhaseSettings::new(0.0, PI, 0.0, 0.0);
        assert_abs_diff_eq!(differential_phase(&s), FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn differential_phase_cancels_when_both_parties_match() {
        // Both choosing −π/2 (the same odd-basis bit-0 settings) routes the
        // light back to D0, which needs Δφ = 0.
        let s = PhaseSettings::from_alice_bob(-FRAC_PI_2, -FRAC_PI_2);
        assert_eq!(differential_phase(&s), 0.0);
    }

    #[test]
    fn ideal_bulk_routing_is_deterministic_at_the_four_settings() {
        let bench = BulkBench::ideal();
        assert_eq!(bulk_routing(0.0, &bench).p_d0, 1.0);
        assert!(bulk_routing(FRAC_PI_2, &bench).p_d1 >= 1.0 - 1e-12);
        assert!(bulk_routing(PI, &bench).p_d0 >= 1.0 - 1e-12);
        assert!(bulk_routing(-FRAC_PI_2, &bench).p_d1 >= 1.0 - 1e-12);
    }

    #[test]
    fn ideal_bulk_routing_splits_evenly_between_bases() {
        let bench = BulkBench::ideal();
        let p = bulk_routing(FRAC_PI_4, &bench);
        assert_abs_diff_eq!(p.p_d0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p_d1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn misaligned_waveplate_leaks_at_odd_multiples_only() {
        let delta = 2.0_f64.to_radians();
        let bench = BulkBench::with_misalignment(delta).unwrap();
        let expected = (4.0 * delta).sin().powi(2);

        let worst = bulk_routing(FRAC_PI_2, &bench);
        assert_abs_diff_eq!(worst.p_d0, expected, epsilon = 1e-12);
        assert!((expected - 0.0194).abs() < 5e-4);

        // Even multiples stay exact.
        assert_eq!(bulk_routing(0.0, &bench).p_d0, 1.0);
        assert!(bulk_routing(PI, &bench).p_d1 <= 1e-30);
    }

    #[test]
    fn misalignment_outside_the_regime_is_rejected() {
        assert!(BulkBench::with_misalignment(std::f64::consts::FRAC_PI_8).is_err());
        assert!(average_misrouting(-0.5).is_err());
    }

    #[test]
    fn balanced_coupler_has_no_null_leakage() {
        let bench = FiberBench::<f64>::balanced();
        assert!(fiber_routing(PI, &bench).p_d1 <= 1e-30);
        assert_eq!(bench.null_leakage(), 0.0);
    }

    #[test]
    fn coupler_imbalance_leaks_at_the_nulls() {
        // A 55:45 power split leaves (t² − rc²)² = 1% on the port that
        // should be dark when Δφ is an odd multiple of π/2.
        let bench = FiberBench::from_power_split(0.55).unwrap();
        assert_abs_diff_eq!(bench.null_leakage(), 0.01, epsilon = 1e-15);
        let p = fiber_routing(FRAC_PI_2, &bench);
        assert_abs_diff_eq!(p.p_d0, 0.01, epsilon = 1e-14);
    }

    #[test]
    fn contrast_and_imbalance_invert_each_other() {
        let im = required_imbalance_for_contrast(650.0).unwrap();
        assert_abs_diff_eq!(im, 1.0 / 650.0_f64.sqrt(), epsilon = 1e-16);
        let bench = FiberBench::from_imbalance(im).unwrap();
        assert_relative_eq!(bench.switching_contrast(), 650.0, max_relative = 1e-12);
        // ≈ a 51.96 : 48.04 power split.
        assert_abs_diff_eq!(bench.t() * bench.t(), 0.5196, epsilon = 1e-4);
        assert!(required_imbalance_for_contrast(0.5).is_err());
    }

    #[test]
    fn coupler_construction_validates_its_coefficients() {
        assert!(FiberBench::new(0.9, 0.9).is_err());
        assert!(FiberBench::new(1.2, 0.0).is_err());
        assert!(FiberBench::new(FRAC_PI_4.cos(), FRAC_PI_4.sin()).is_ok());
        assert!(FiberBench::from_power_split(1.5).is_err());
    }

    #[test]
    fn effective_mirror_reduces_to_the_bare_mirror_when_quiet() {
        let m = effective_faraday_mirror(0.0, 0.0, Complex::one());
        assert!(m.max_entry_distance(&faraday_mirror()) <= 1e-15);
    }

    #[test]
    fn modulator_phases_pi_apart_flip_the_mirror_sign() {
        let a = effective_faraday_mirror(0.0, 0.3, Complex::new(0.8, 0.0));
        let b = effective_faraday_mirror(PI, 0.3, Complex::new(0.8, 0.0));
        assert!(b.max_entry_distance(&a.scaled(-Complex::<f64>::one())) <= 1e-15);
    }

    #[test]
    fn round_trip_through_the_effective_mirror_collects_every_phase() {
        use crate::jones::{round_trip, PolarizationState, ReciprocalElement};
        use rand::SeedableRng;

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let chain = [ReciprocalElement::random(&mut rng)];
        let (loss, phi_s, phi_a) = (Complex::new(0.7, 0.0), 0.4, 1.1);

        // The mirror assembly is a plain Faraday mirror with every scalar
        // factored out, so the round trip of an H pulse returns
        // −loss·e^{i(X+Y)}·e^{i(φ_s+φ_A)}·[0, a_H].
        let scale = loss * Complex::new(0.0, phi_s + phi_a).exp();
        let m = round_trip(&chain, scale);
        let a_h = Complex::new(0.5, -0.2);
        let out = m.apply(&PolarizationState::new(a_h, Complex::new(0.0, 0.0)));
        let mode_sum = chain[0].mode_phases.0 + chain[0].mode_phases.1;
        let expected = -(Complex::<f64>::i() * mode_sum).exp() * scale * a_h;
        assert!(out.h.norm() <= 1e-12);
        assert!((out.v - expected).norm() <= 1e-12);
    }

    #[test]
    fn average_misrouting_matches_the_closed_form() {
        assert_eq!(average_misrouting(0.0).unwrap(), 0.0);
        let delta = 2.0_f64.to_radians();
        let avg = average_misrouting(delta).unwrap();
        assert_abs_diff_eq!(avg, (4.0 * delta).sin().powi(2) / 2.0, epsilon = 1e-16);
        assert!((avg - 0.0097).abs() < 5e-4);
    }
}

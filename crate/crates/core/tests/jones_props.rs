//! Randomized properties of the polarization layer.
//!
//! Every guarantee the round-trip analysis rests on is exercised here over
//! randomly drawn optical chains: the collapse of any double pass onto a
//! scaled conjugating mirror, the orthogonality of the returning beam to the
//! launched one, the invariance of the mirror under unit-determinant basis
//! changes, and the algebra of the reverse-propagation rule itself.

use num_complex::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use qkd_core::jones::{
    counter_propagating_overlap, faraday_mirror, inner_product, round_trip, FaradayRotator,
};
use qkd_core::{JonesMatrix64, PolarizationState64, ReciprocalElement64};

type C = Complex<f64>;

const TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// A mirror scale with modulus in [0.1, 1]: attenuation plus a static phase.
fn random_mirror_scale(rng: &mut ChaCha12Rng) -> C {
    let modulus = 0.1 + 0.9 * rng.random::<f64>();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    c(modulus, 0.0) * c(0.0, phase).exp()
}

fn random_chain(rng: &mut ChaCha12Rng, len: usize) -> Vec<ReciprocalElement64> {
    (0..len).map(|_| ReciprocalElement64::random(rng)).collect()
}

/// The scalar every double pass must collapse onto: the product of each
/// element's two mode phases, times the mirror scale.
fn collapse_scalar(chain: &[ReciprocalElement64], mirror_scale: C) -> C {
    let modes: C = chain
        .iter()
        .map(|e| (C::i() * (e.mode_phases.0 + e.mode_phases.1)).exp())
        .product();
    mirror_scale * modes
}

/// A general (non-unitary) matrix with entries of modulus ≤ 1.
fn random_matrix(rng: &mut ChaCha12Rng) -> JonesMatrix64 {
    let e = |rng: &mut ChaCha12Rng| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    JonesMatrix64::new(e(rng), e(rng), e(rng), e(rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Any chain of reciprocal elements, doubled around the conjugating
    /// mirror, acts as that mirror times one scalar that collects every mode
    /// phase once — the chain's basis maps drop out entirely.
    #[test]
    fn double_pass_collapses_to_a_scaled_conjugating_mirror(
        seed in any::<u64>(),
        len in 1usize..=4,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, len);
        let scale = random_mirror_scale(&mut rng);

        let actual = round_trip(&chain, scale);
        let expected = faraday_mirror().scaled(collapse_scalar(&chain, scale));
        prop_assert!(actual.max_entry_distance(&expected) <= TOL);
    }

    /// The beam returning from a double pass carries the polarization
    /// orthogonal to the launched one, for every launch state and every
    /// chain. Orthogonality of counter-propagating beams is the bilinear
    /// overlap, not the usual Hermitian product.
    #[test]
    fn double_pass_return_is_orthogonal_to_any_launch(
        seed in any::<u64>(),
        len in 1usize..=4,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, len);
        let scale = random_mirror_scale(&mut rng);
        let m = round_trip(&chain, scale);

        for _ in 0..8 {
            let launch = PolarizationState64::random_unit(&mut rng);
            let ret = m.apply(&launch);
            prop_assert!(counter_propagating_overlap(&launch, &ret).norm() <= TOL);
        }
    }

    /// The two linear launch polarizations come back swapped and weighted by
    /// the *same* prefactor, which is what lets a later interference stage
    /// compare pulses that traveled the chain at different times.
    #[test]
    fn both_linear_launches_return_with_the_same_prefactor(
        seed in any::<u64>(),
        len in 1usize..=4,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, len);
        let scale = random_mirror_scale(&mut rng);
        let m = round_trip(&chain, scale);

        let from_h = m.apply(&PolarizationState64::horizontal());
        let from_v = m.apply(&PolarizationState64::vertical());

        prop_assert!(from_h.h.norm() <= TOL, "horizontal launch must return vertical");
        prop_assert!(from_v.v.norm() <= TOL, "vertical launch must return horizontal");
        prop_assert!((from_h.v - from_v.h).norm() <= TOL, "prefactors must agree");
    }

    /// Unit-determinant basis changes leave the conjugating mirror exactly
    /// invariant under the reverse-propagation conjugation; a global phase
    /// e^{iα} (determinant e^{2iα}) scales it by that determinant instead.
    #[test]
    fn unit_determinant_maps_preserve_the_conjugating_mirror(
        seed in any::<u64>(),
        alpha in 0.0..std::f64::consts::TAU,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let fm = faraday_mirror::<f64>();

        let u = JonesMatrix64::random_unitary(&mut rng);
        let conjugated = u.reversed().compose(&fm).compose(&u);
        prop_assert!(conjugated.max_entry_distance(&fm) <= TOL);

        let with_phase = u.scaled(c(0.0, alpha).exp());
        let conjugated = with_phase.reversed().compose(&fm).compose(&with_phase);
        let determinant = c(0.0, 2.0 * alpha).exp();
        prop_assert!(conjugated.max_entry_distance(&fm.scaled(determinant)) <= TOL);
    }

    /// The reverse-propagation rule is an involution and reverses
    /// composition order, exactly as physical back-propagation must.
    #[test]
    fn reversal_is_an_involution_that_reverses_composition(seed in any::<u64>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng);
        let b = random_matrix(&mut rng);

        prop_assert!(a.reversed().reversed().max_entry_distance(&a) == 0.0);

        let forward_then_reverse = a.compose(&b).reversed();
        let reverse_then_compose = b.reversed().compose(&a.reversed());
        prop_assert!(forward_then_reverse.max_entry_distance(&reverse_then_compose) <= 1e-13);
    }

    /// Two chained elements behave exactly like one element whose forward
    /// map is the product and whose mode phases are the sums, so modeling a
    /// long fiber as one segment or many is a choice of bookkeeping, not of
    /// physics. (The second element is built to share the first's output
    /// frame, which is what makes the merged factorization closed-form.)
    #[test]
    fn chained_elements_merge_into_one(seed in any::<u64>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let first = ReciprocalElement64::random(&mut rng);
        let exit_map = JonesMatrix64::random_unitary(&mut rng);
        let extra = ReciprocalElement64::random(&mut rng);
        let second = ReciprocalElement64::new(
            first.output_basis_map.adjoint(),
            exit_map,
            extra.mode_phases,
        );
        let merged = ReciprocalElement64::new(
            first.input_basis_map,
            exit_map,
            (
                first.mode_phases.0 + second.mode_phases.0,
                first.mode_phases.1 + second.mode_phases.1,
            ),
        );
        let scale = random_mirror_scale(&mut rng);

        let composed = second.forward().compose(&first.forward());
        prop_assert!(composed.max_entry_distance(&merged.forward()) <= TOL);

        let chained = round_trip(&[first, second], scale);
        let collapsed = round_trip(&[merged], scale);
        prop_assert!(chained.max_entry_distance(&collapsed) <= TOL);
    }

    /// A reciprocal rotation undoes itself over a reflection round trip,
    /// while Faraday rotation — non-reciprocal — doubles instead.
    #[test]
    fn rotation_cancels_on_reflection_unless_it_is_faraday(
        gamma in -std::f64::consts::PI..std::f64::consts::PI,
    ) {
        let plain_mirror = JonesMatrix64::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0));

        let reciprocal = JonesMatrix64::rotation(gamma);
        let round = reciprocal.reversed().compose(&plain_mirror).compose(&reciprocal);
        prop_assert!(round.max_entry_distance(&plain_mirror) <= 1e-12);

        let faraday = FaradayRotator::new(gamma);
        let round = faraday.backward().compose(&plain_mirror).compose(&faraday.forward());
        let doubled = plain_mirror.compose(&JonesMatrix64::rotation(2.0 * gamma));
        prop_assert!(round.max_entry_distance(&doubled) <= 1e-12);
    }

    /// Random unit states are unit-norm, and the Hermitian product obeys the
    /// basics: ⟨ψ|ψ⟩ is the squared norm and |⟨ψ|φ⟩| respects Cauchy–Schwarz.
    #[test]
    fn unit_states_and_inner_products_are_well_behaved(seed in any::<u64>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let psi = PolarizationState64::random_unit(&mut rng);
        let phi = PolarizationState64::random_unit(&mut rng);

        prop_assert!((psi.norm_sqr() - 1.0).abs() <= 1e-12);
        let self_product = inner_product(&psi, &psi);
        prop_assert!((self_product.re - psi.norm_sqr()).abs() <= 1e-12);
        prop_assert!(self_product.im.abs() <= 1e-12);
        prop_assert!(inner_product(&psi, &phi).norm() <= 1.0 + 1e-12);
    }
}

/// A quarter-turn Faraday rotator backed by a plain fold mirror *is* the
/// conjugating mirror: rotation by π/4 in, reflection, and another π/4 in
/// the same absolute sense on the way out.
#[test]
fn a_quarter_turn_rotator_against_a_plain_mirror_builds_the_conjugating_mirror() {
    let rotator = FaradayRotator::new(std::f64::consts::FRAC_PI_4);
    let plain_mirror = JonesMatrix64::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0));
    let assembled = rotator.backward().compose(&plain_mirror).compose(&rotator.forward());
    assert!(assembled.max_entry_distance(&faraday_mirror()) <= 1e-12);
}

//! Complex 2×2 Jones calculus for fully polarized light.
//!
//! Polarization states are complex two-vectors over a horizontal/vertical
//! basis; optical elements are 2×2 complex matrices. The module models
//! forward and reverse propagation through reciprocal elements, Faraday
//! rotators and mirrors, and the round trip fiber → mirror → fiber that the
//! autocompensating interferometer relies on: no matter how birefringent the
//! path, a pulse reflected by a Faraday mirror returns in the polarization
//! state orthogonal to the one it left with, with a scalar prefactor that is
//! independent of the input polarization.
//!
//! Everything is generic over the scalar precision `T` (`f32` or `f64`);
//! the crate root exports `f64` aliases.

use num_complex::Complex;
use num_traits::{Float, FloatConst, One, Zero};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Converts an `f64` literal into the scalar type in use.
///
/// Only called on compile-time constants and samples well inside every
/// float's range, so the conversion cannot fail.
fn lit<T: Float>(x: f64) -> T {
    T::from(x).expect("literal representable in scalar type")
}

/// A pure polarization state: complex amplitudes of the horizontal and
/// vertical field components. Norms are not implicitly maintained; a "unit
/// state" is one with `norm_sqr()` equal to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationState<T> {
    /// Horizontal complex amplitude.
    pub h: Complex<T>,
    /// Vertical complex amplitude.
    pub v: Complex<T>,
}

impl<T: Float + FloatConst> PolarizationState<T> {
    pub fn new(h: Complex<T>, v: Complex<T>) -> Self {
        Self { h, v }
    }

    /// Unit state polarized along the horizontal axis: `[1, 0]`.
    pub fn horizontal() -> Self {
        Self::new(Complex::one(), Complex::zero())
    }

    /// Unit state polarized along the vertical axis: `[0, 1]`.
    pub fn vertical() -> Self {
        Self::new(Complex::zero(), Complex::one())
    }

    /// Total intensity `|h|² + |v|²`.
    pub fn norm_sqr(&self) -> T {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// Scales the state to unit norm, or `None` for the zero state.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sqr().sqrt();
        if n == T::zero() || !n.is_finite() {
            return None;
        }
        Some(Self::new(self.h / n, self.v / n))
    }

    /// Draws a uniformly random unit state (complex Gaussian amplitudes,
    /// normalized). Used to exercise polarization-independence properties.
    pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let g = |rng: &mut R| -> Complex<T> {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex::new(lit(re), lit(im))
            };
            let s = Self::new(g(rng), g(rng));
            if let Some(unit) = s.normalized() {
                return unit;
            }
        }
    }
}

/// Hermitian inner product `⟨a, b⟩ = conj(a)·b` between two states of the
/// *same* propagation direction.
///
/// `inner_product(s, s)` is the intensity of `s`; orthogonal states give 0.
pub fn inner_product<T: Float + FloatConst>(
    a: &PolarizationState<T>,
    b: &PolarizationState<T>,
) -> Complex<T> {
    a.h.conj() * b.h + a.v.conj() * b.v
}

/// Polarization overlap between a forward-propagating state and a
/// counter-propagating one: `forward.h·backward.h − forward.v·backward.v`.
///
/// Backward-propagating fields are written in a right-handed frame with the
/// z- and x-axes reversed (the convention behind [`JonesMatrix::reversed`]),
/// so mapping a returning Jones vector into the forward frame flips the
/// sign of one component and — because the beams counter-propagate —
/// conjugates the amplitudes. Pairing the forward state with that image
/// turns the Hermitian inner product into this bilinear form (up to overall
/// conjugation, which cannot move a zero).
///
/// Zero means the two beams carry orthogonal polarizations: any lossless
/// analyzer chain that fully transmits the forward beam fully blocks the
/// returning one. Round trips through a Faraday mirror yield exactly this
/// for every input, which is the orthoconjugation theorem in operational
/// form; the plain [`inner_product`] shows it only for inputs with a single
/// nonzero component (such as the H and V states), because it compares the
/// returning vector in the wrong frame.
pub fn counter_propagating_overlap<T: Float + FloatConst>(
    forward: &PolarizationState<T>,
    backward: &PolarizationState<T>,
) -> Complex<T> {
    forward.h * backward.h - forward.v * backward.v
}

/// A 2×2 complex Jones matrix acting on [`PolarizationState`]s.
///
/// Entry `mRC` sits at row `R`, column `C`; `apply` computes the usual
/// matrix–vector product with `h` as the first component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesMatrix<T> {
    pub m00: Complex<T>,
    pub m01: Complex<T>,
    pub m10: Complex<T>,
    pub m11: Complex<T>,
}

impl<T: Float + FloatConst> JonesMatrix<T> {
    pub fn new(m00: Complex<T>, m01: Complex<T>, m10: Complex<T>, m11: Complex<T>) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub fn identity() -> Self {
        Self::new(Complex::one(), Complex::zero(), Complex::zero(), Complex::one())
    }

    /// Real rotation by `angle`: `[[cos, −sin], [sin, cos]]`.
    pub fn rotation(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Complex::new(c, T::zero()),
            Complex::new(-s, T::zero()),
            Complex::new(s, T::zero()),
            Complex::new(c, T::zero()),
        )
    }

    /// Diagonal matrix `diag(e^{ix}, e^{iy})`. The arguments are complex so
    /// that a positive imaginary part attenuates the mode (`|e^{ix}| =
    /// e^{−Im x} ≤ 1`) while the real part shifts its phase.
    pub fn mode_phase(x: Complex<T>, y: Complex<T>) -> Self {
        let i = Complex::<T>::i();
        Self::new((i * x).exp(), Complex::zero(), Complex::zero(), (i * y).exp())
    }

    /// Matrix product `self · other`: the element `other` is traversed
    /// first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.m00 * other.m00 + self.m01 * other.m10,
            self.m00 * other.m01 + self.m01 * other.m11,
            self.m10 * other.m00 + self.m11 * other.m10,
            self.m10 * other.m01 + self.m11 * other.m11,
        )
    }

    /// The matrix describing the same *reciprocal* element traversed in the
    /// opposite direction: transpose with the off-diagonal entries negated.
    ///
    /// This rule applies to ordinary (reciprocal) optics only. Faraday
    /// rotation is non-reciprocal and keeps its sense of rotation instead —
    /// see [`FaradayRotator::backward`].
    pub fn reversed(&self) -> Self {
        Self::new(self.m00, -self.m10, -self.m01, self.m11)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::new(self.m00.conj(), self.m10.conj(), self.m01.conj(), self.m11.conj())
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: Complex<T>) -> Self {
        Self::new(self.m00 * factor, self.m01 * factor, self.m10 * factor, self.m11 * factor)
    }

    /// Applies the matrix to a state (matrix–vector product).
    pub fn apply(&self, s: &PolarizationState<T>) -> PolarizationState<T> {
        PolarizationState::new(
            self.m00 * s.h + self.m01 * s.v,
            self.m10 * s.h + self.m11 * s.v,
        )
    }

    /// Largest entrywise modulus of `self − other`; the distance used by
    /// every matrix tolerance check in this crate.
    pub fn max_entry_distance(&self, other: &Self) -> T {
        let d = [
            (self.m00 - other.m00).norm(),
            (self.m01 - other.m01).norm(),
            (self.m10 - other.m10).norm(),
            (self.m11 - other.m11).norm(),
        ];
        d.into_iter().fold(T::zero(), T::max)
    }

    /// Whether `M†M = I` holds entrywise within `tol`.
    pub fn is_unitary(&self, tol: T) -> bool {
        self.adjoint().compose(self).max_entry_distance(&Self::identity()) <= tol
    }

    /// Draws a random unit-determinant unitary, distributed by Euler
    /// angles: `U = Rz(β) · Ry(θ) · Rz(φ)` with `Rz(x) = diag(e^{−ix/2},
    /// e^{ix/2})`, `Ry(t)` the real rotation by `t/2`, `β` and `φ` uniform
    /// on `[0, 2π)` and `cos θ` uniform on `[−1, 1]` (Haar on SU(2)).
    ///
    /// The determinant is pinned to 1 deliberately: a passive basis change
    /// has no physical global phase (any overall factor belongs to the mode
    /// phases it surrounds), and the reverse-propagation identities this
    /// module is built on — `U_R·FM·U = FM` and the round-trip collapse to
    /// `e^{i(ΣX+ΣY)}·r·FM` — pick up a spurious `det U` factor otherwise.
    /// Scale by `e^{iα}` manually for a general U(2) element.
    pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let two_pi = lit::<T>(2.0) * T::PI();
        let beta = lit::<T>(rng.random::<f64>()) * two_pi;
        let phi = lit::<T>(rng.random::<f64>()) * two_pi;
        let theta = lit::<T>(1.0 - 2.0 * rng.random::<f64>()).acos();

        let rz = |x: T| {
            let half = Complex::new(T::zero(), x / lit(2.0));
            Self::new((-half).exp(), Complex::zero(), Complex::zero(), half.exp())
        };
        let ry = Self::rotation(theta / lit(2.0));
        rz(beta).compose(&ry).compose(&rz(phi))
    }
}

/// The Jones matrix of a Faraday mirror: `[[0, −1], [−1, 0]]`.
///
/// It maps every polarization state to the orthogonal one, which is what
/// makes round trips through it insensitive to path birefringence.
pub fn faraday_mirror<T: Float + FloatConst>() -> JonesMatrix<T> {
    let zero = Complex::zero();
    let minus_one = -Complex::<T>::one();
    JonesMatrix::new(zero, minus_one, minus_one, zero)
}

/// A reciprocal optical element factored into its eigenmode decomposition:
/// forward propagation is `V · diag(e^{iX}, e^{iY}) · U`, where `U` maps the
/// lab basis onto the element's eigenmodes, the diagonal applies each mode's
/// phase (and, through the imaginary parts of `X`/`Y`, attenuation), and `V`
/// maps back out. A birefringent fiber segment is the canonical example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReciprocalElement<T> {
    /// `U`: lab basis → eigenmode basis at the input face.
    pub input_basis_map: JonesMatrix<T>,
    /// `V`: eigenmode basis → lab basis at the output face.
    pub output_basis_map: JonesMatrix<T>,
    /// `(X, Y)`: complex phase accumulated by each eigenmode.
    pub mode_phases: (Complex<T>, Complex<T>),
}

impl<T: Float + FloatConst> ReciprocalElement<T> {
    pub fn new(
        input_basis_map: JonesMatrix<T>,
        output_basis_map: JonesMatrix<T>,
        mode_phases: (Complex<T>, Complex<T>),
    ) -> Self {
        Self { input_basis_map, output_basis_map, mode_phases }
    }

    /// Forward-propagation matrix `V · diag(e^{iX}, e^{iY}) · U`.
    pub fn forward(&self) -> JonesMatrix<T> {
        self.output_basis_map
            .compose(&JonesMatrix::mode_phase(self.mode_phases.0, self.mode_phases.1))
            .compose(&self.input_basis_map)
    }

    /// Reverse-propagation matrix, i.e. the transpose/negate rule applied to
    /// [`forward`](Self::forward). Equals `U_R · diag(e^{iX}, e^{iY}) · V_R`
    /// because the rule reverses composition order and leaves diagonal
    /// matrices unchanged.
    pub fn backward(&self) -> JonesMatrix<T> {
        self.forward().reversed()
    }

    /// Draws an element with random unitary basis maps, mode phases uniform
    /// on `[0, 2π)`, and mild random attenuation on each mode. Models a
    /// fiber segment in an arbitrary birefringence state.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let phase = |rng: &mut R| -> Complex<T> {
            Complex::new(
                lit(rng.random::<f64>() * two_pi),
                lit(rng.random::<f64>() * 0.2),
            )
        };
        let x = phase(rng);
        let y = phase(rng);
        Self::new(JonesMatrix::random_unitary(rng), JonesMatrix::random_unitary(rng), (x, y))
    }
}

/// A Faraday rotator: rotates polarization by `gamma` regardless of the
/// direction of propagation. That direction-independence is what makes it
/// non-reciprocal — reversing the light does *not* undo the rotation, so
/// [`backward`](Self::backward) is a rotation by `−gamma` in the forward
/// frame rather than the transpose/negate image of [`forward`](Self::forward).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaradayRotator<T> {
    /// Rotation angle in radians.
    pub gamma: T,
}

impl<T: Float + FloatConst> FaradayRotator<T> {
    pub fn new(gamma: T) -> Self {
        Self { gamma }
    }

    /// Builds the rotator from its physical parameters: Verdet constant,
    /// axial magnetic field, vacuum wavevector and element length, with
    /// `gamma = verdet · field · wavevector · length`.
    pub fn from_physical(verdet: T, field: T, wavevector: T, length: T) -> Self {
        Self::new(verdet * field * wavevector * length)
    }

    /// Rotation by `+gamma` for forward propagation.
    pub fn forward(&self) -> JonesMatrix<T> {
        JonesMatrix::rotation(self.gamma)
    }

    /// Rotation by `−gamma` for reverse propagation (non-reciprocal).
    pub fn backward(&self) -> JonesMatrix<T> {
        JonesMatrix::rotation(-self.gamma)
    }
}

/// Propagates a state through an ordered chain of reciprocal elements, a
/// scaled Faraday mirror, and the same chain backwards:
/// `M = T_R · (mirror_scale · FM) · T`, with `T` the composed forward chain
/// (first list element traversed first).
///
/// The result always equals `e^{i(ΣX + ΣY)} · mirror_scale · FM` — a Faraday
/// mirror times a scalar that collects every mode phase once, independent of
/// the chain's basis maps. An empty chain yields the bare scaled mirror.
pub fn round_trip<T: Float + FloatConst>(
    elements: &[ReciprocalElement<T>],
    mirror_scale: Complex<T>,
) -> JonesMatrix<T> {
    let forward = elements
        .iter()
        .fold(JonesMatrix::identity(), |acc, e| e.forward().compose(&acc));
    let mirror = faraday_mirror().scaled(mirror_scale);
    forward.reversed().compose(&mirror).compose(&forward)
}

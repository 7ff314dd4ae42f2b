//! Bell-diagonal states and the fidelity algebra of entanglement swapping
//! and recurrence purification.
//!
//! All states here are diagonal in the Bell basis, written in the order
//!
//! ```text
//! |φ⁺⟩ = (|00⟩ + |11⟩)/√2    |ψ⁻⟩ = (|01⟩ − |10⟩)/√2
//! |ψ⁺⟩ = (|01⟩ + |10⟩)/√2    |φ⁻⟩ = (|00⟩ − |11⟩)/√2
//! ```
//!
//! and represented by the four diagonal coefficients. The first coefficient
//! is the fidelity to |φ⁺⟩, the figure of merit throughout this crate. Two
//! one-parameter families recur: Werner states `(F, (1−F)/3, (1−F)/3,
//! (1−F)/3)` (white noise) and Binary states `(F, 0, 1−F, 0)` (bit-flip
//! noise).
//!
//! Swapping two Werner links of fidelity `F` yields fidelity
//! `η(F) = 1/4 + (3/4)((4F−1)/3)²`; [`swap_fidelity`] and
//! [`swap_fidelity_inverse`] implement `η` and its closed-form inverse.
//! One recurrence purification round consumes two pairs and, on success,
//! keeps one better pair; [`round_success_prob`] and
//! [`round_output_fidelity`] give the per-round law for the symmetric
//! protocols and [`pump_round`] the two-input generalization used by
//! entanglement pumping.

use serde::Serialize;
use thiserror::Error;

/// Bell-coefficient vectors must sum to 1 within this tolerance.
pub const NORM_TOL: f64 = 1e-12;
/// Noise-class shape checks and fidelity comparisons use this tolerance.
pub const FIDELITY_TOL: f64 = 1e-10;

/// A two-qubit state diagonal in the Bell basis.
///
/// Coefficients are ordered `(|φ⁺⟩, |ψ⁻⟩, |ψ⁺⟩, |φ⁻⟩)`; they are
/// nonnegative and sum to 1 within [`NORM_TOL`]. Constructed values are
/// stored as given (no renormalization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellDiagonalState {
    c: [f64; 4],
}

/// One-parameter noise families used for link-level and end-to-end pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseClass {
    /// White noise: `(F, (1−F)/3, (1−F)/3, (1−F)/3)`.
    Werner,
    /// Bit-flip noise: `(F, 0, 1−F, 0)`.
    Binary,
}

/// Purification protocol selector.
///
/// The three symmetric protocols follow the usual per-round recurrences;
/// `Pumping` repeatedly purifies one primary pair with fresh base pairs of
/// the designated noise class and has no symmetric round form (see
/// [`pump_round`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProtocolId {
    /// DEJMPS on arbitrary Bell-diagonal inputs; tracks all four coefficients.
    DejmpsBellDiagonal,
    /// DEJMPS specialized to Binary inputs; the class is closed under it.
    DejmpsBinary,
    /// BBPSSW on Werner inputs; the output is twirled back to Werner form.
    BbpsswWerner,
    /// Entanglement pumping with base pairs drawn from the given class.
    Pumping(NoiseClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BellError {
    #[error("Bell coefficients must sum to 1 within {NORM_TOL:e} (got sum {sum})")]
    NotNormalized { sum: f64 },
    #[error("Bell coefficient {index} out of [0, 1]: {value}")]
    CoefficientOutOfRange { index: usize, value: f64 },
    #[error("{name} out of domain [{lo}, {hi}]: {value}")]
    OutOfDomain {
        name: &'static str,
        lo: f64,
        hi: f64,
        value: f64,
    },
    #[error("state is not in the {expected} input class of {proto:?}")]
    ClassMismatch {
        proto: ProtocolId,
        expected: &'static str,
    },
    #[error("purification requires fidelity > 0.5 (got {fidelity})")]
    FidelityTooLow { fidelity: f64 },
    #[error("{0:?} is asymmetric; use pump_round for its per-round law")]
    AsymmetricProtocol(ProtocolId),
}

impl BellDiagonalState {
    /// Builds a state from explicit coefficients.
    ///
    /// Rejects non-finite values, coefficients outside `[0, 1]` (beyond a
    /// [`NORM_TOL`] slack for rounding debris, which is clamped to the
    /// boundary), and sums off 1 by more than [`NORM_TOL`].
    pub fn new(f1: f64, f2: f64, f3: f64, f4: f64) -> Result<Self, BellError> {
        let mut c = [f1, f2, f3, f4];
        for (i, v) in c.iter_mut().enumerate() {
            if !v.is_finite() || *v < -NORM_TOL || *v > 1.0 + NORM_TOL {
                return Err(BellError::CoefficientOutOfRange {
                    index: i,
                    value: *v,
                });
            }
            *v = v.clamp(0.0, 1.0);
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(BellError::NotNormalized { sum });
        }
        Ok(Self { c })
    }

    /// The Werner state of fidelity `f`.
    pub fn werner(f: f64) -> Result<Self, BellError> {
        check_unit("fidelity", f)?;
        let rest = (1.0 - f) / 3.0;
        Self::new(f, rest, rest, rest)
    }

    /// The Binary (bit-flip) state of fidelity `f`.
    pub fn binary(f: f64) -> Result<Self, BellError> {
        check_unit("fidelity", f)?;
        Self::new(f, 0.0, 1.0 - f, 0.0)
    }

    /// Fidelity to |φ⁺⟩ (the first coefficient).
    pub fn fidelity(&self) -> f64 {
        self.c[0]
    }

    /// Coefficients in basis order `(|φ⁺⟩, |ψ⁻⟩, |ψ⁺⟩, |φ⁻⟩)`.
    pub fn coefficients(&self) -> [f64; 4] {
        self.c
    }

    /// Whether the state has the exact shape of `class` within
    /// [`FIDELITY_TOL`].
    pub fn is_class(&self, class: NoiseClass) -> bool {
        let [f1, f2, f3, f4] = self.c;
        match class {
            NoiseClass::Werner => {
                let rest = (1.0 - f1) / 3.0;
                (f2 - rest).abs() <= FIDELITY_TOL
                    && (f3 - rest).abs() <= FIDELITY_TOL
                    && (f4 - rest).abs() <= FIDELITY_TOL
            }
            NoiseClass::Binary => f2.abs() <= FIDELITY_TOL && f4.abs() <= FIDELITY_TOL,
        }
    }
}

impl NoiseClass {
    /// The class representative of fidelity `f`.
    pub fn state(self, f: f64) -> Result<BellDiagonalState, BellError> {
        match self {
            NoiseClass::Werner => BellDiagonalState::werner(f),
            NoiseClass::Binary => BellDiagonalState::binary(f),
        }
    }

    /// Lowercase name used in configs and reports.
    pub fn name(self) -> &'static str {
        match self {
            NoiseClass::Werner => "werner",
            NoiseClass::Binary => "binary",
        }
    }
}

impl ProtocolId {
    /// The noise class this protocol's inputs must belong to, if restricted.
    fn input_class(self) -> Option<NoiseClass> {
        match self {
            ProtocolId::DejmpsBellDiagonal => None,
            ProtocolId::DejmpsBinary => Some(NoiseClass::Binary),
            ProtocolId::BbpsswWerner => Some(NoiseClass::Werner),
            ProtocolId::Pumping(class) => Some(class),
        }
    }

    fn check_input(self, state: &BellDiagonalState) -> Result<(), BellError> {
        if let Some(class) = self.input_class() {
            if !state.is_class(class) {
                return Err(BellError::ClassMismatch {
                    proto: self,
                    expected: class.name(),
                });
            }
        }
        Ok(())
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<(), BellError> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(BellError::OutOfDomain {
            name,
            lo: 0.0,
            hi: 1.0,
            value: v,
        });
    }
    Ok(())
}

/// Fidelity after swapping two Werner pairs of fidelity `f_link`:
/// `η(F) = 1/4 + (3/4)((4F−1)/3)²`.
///
/// Strictly increasing on `[1/4, 1]`, with fixed points only at the
/// endpoints; `η(F) < F` strictly inside.
pub fn swap_fidelity(f_link: f64) -> Result<f64, BellError> {
    if !f_link.is_finite() || !(0.25..=1.0).contains(&f_link) {
        return Err(BellError::OutOfDomain {
            name: "f_link",
            lo: 0.25,
            hi: 1.0,
            value: f_link,
        });
    }
    let x = (4.0 * f_link - 1.0) / 3.0;
    Ok(0.25 + 0.75 * x * x)
}

/// Inverse of [`swap_fidelity`] on `(1/4, 1]`:
/// `η⁻¹(t) = (1 + 3·sqrt((4t−1)/3))/4`.
///
/// This is the link-level fidelity a pair of Werner links must reach so
/// that their swap meets an end-to-end target `t`.
pub fn swap_fidelity_inverse(f_target: f64) -> Result<f64, BellError> {
    if !f_target.is_finite() || f_target <= 0.25 || f_target > 1.0 {
        return Err(BellError::OutOfDomain {
            name: "f_target",
            lo: 0.25,
            hi: 1.0,
            value: f_target,
        });
    }
    Ok((1.0 + 3.0 * ((4.0 * f_target - 1.0) / 3.0).sqrt()) / 4.0)
}

/// Success probability of one symmetric purification round on two copies
/// of `state`.
pub fn round_success_prob(proto: ProtocolId, state: &BellDiagonalState) -> Result<f64, BellError> {
    proto.check_input(state)?;
    let [f1, f2, f3, f4] = state.coefficients();
    match proto {
        ProtocolId::DejmpsBellDiagonal => {
            let a = f1 + f2;
            let b = f3 + f4;
            Ok(a * a + b * b)
        }
        ProtocolId::DejmpsBinary => Ok(f1 * f1 + (1.0 - f1) * (1.0 - f1)),
        ProtocolId::BbpsswWerner => {
            let a = f1 + (1.0 - f1) / 3.0;
            let b = 2.0 * (1.0 - f1) / 3.0;
            Ok(a * a + b * b)
        }
        ProtocolId::Pumping(_) => Err(BellError::AsymmetricProtocol(proto)),
    }
}

/// Post-success state of one symmetric purification round on two copies of
/// `state`.
///
/// Requires fidelity above 1/2. `DejmpsBellDiagonal` tracks the full
/// four-coefficient update; `DejmpsBinary` stays Binary; `BbpsswWerner`
/// twirls the output back to Werner form so its scalar recursion stays
/// exact across rounds.
pub fn round_output_fidelity(
    proto: ProtocolId,
    state: &BellDiagonalState,
) -> Result<BellDiagonalState, BellError> {
    proto.check_input(state)?;
    let [f1, f2, f3, f4] = state.coefficients();
    if f1 <= 0.5 {
        return Err(BellError::FidelityTooLow { fidelity: f1 });
    }
    match proto {
        ProtocolId::DejmpsBellDiagonal => {
            let a = f1 + f2;
            let b = f3 + f4;
            let n = a * a + b * b;
            BellDiagonalState::new(
                (f1 * f1 + f2 * f2) / n,
                2.0 * (f3 * f4) / n,
                (f3 * f3 + f4 * f4) / n,
                2.0 * (f1 * f2) / n,
            )
        }
        ProtocolId::DejmpsBinary => {
            let miss = 1.0 - f1;
            let n = f1 * f1 + miss * miss;
            BellDiagonalState::binary((f1 * f1) / n)
        }
        ProtocolId::BbpsswWerner => {
            let miss = (1.0 - f1) / 3.0;
            let a = f1 + miss;
            let b = 2.0 * miss;
            let n = a * a + b * b;
            BellDiagonalState::werner((f1 * f1 + miss * miss) / n)
        }
        ProtocolId::Pumping(_) => Err(BellError::AsymmetricProtocol(proto)),
    }
}

/// One entanglement-pumping round: purifies `primary` with one fresh
/// `base` pair via the two-input Bell-diagonal DEJMPS update.
///
/// Returns the success probability and the post-success primary state.
/// With `primary == base` this reduces exactly to the symmetric DEJMPS
/// round. Both inputs need fidelity above 1/2.
pub fn pump_round(
    primary: &BellDiagonalState,
    base: &BellDiagonalState,
) -> Result<(f64, BellDiagonalState), BellError> {
    for s in [primary, base] {
        if s.fidelity() <= 0.5 {
            return Err(BellError::FidelityTooLow {
                fidelity: s.fidelity(),
            });
        }
    }
    let [a1, a2, a3, a4] = primary.coefficients();
    let [b1, b2, b3, b4] = base.coefficients();
    let p = (a1 + a2) * (b1 + b2) + (a3 + a4) * (b3 + b4);
    let out = BellDiagonalState::new(
        (a1 * b1 + a2 * b2) / p,
        (a3 * b4 + a4 * b3) / p,
        (a3 * b3 + a4 * b4) / p,
        (a1 * b2 + a2 * b1) / p,
    )?;
    Ok((p, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol:e})");
    }

    #[test]
    fn state_constructors_validate() {
        assert!(BellDiagonalState::new(0.7, 0.1, 0.1, 0.1).is_ok());
        assert!(matches!(
            BellDiagonalState::new(0.7, 0.1, 0.1, 0.2),
            Err(BellError::NotNormalized { .. })
        ));
        assert!(matches!(
            BellDiagonalState::new(1.2, -0.1, -0.05, -0.05),
            Err(BellError::CoefficientOutOfRange { .. })
        ));
        assert!(BellDiagonalState::werner(1.1).is_err());
        let w = BellDiagonalState::werner(0.9).unwrap();
        assert!(w.is_class(NoiseClass::Werner));
        assert!(!w.is_class(NoiseClass::Binary));
        let b = BellDiagonalState::binary(0.9).unwrap();
        assert!(b.is_class(NoiseClass::Binary));
        assert_close(b.coefficients()[2], 0.1, 1e-15);
    }

    #[test]
    fn swap_fidelity_known_values() {
        assert_close(swap_fidelity(1.0).unwrap(), 1.0, 1e-15);
        assert_close(swap_fidelity(0.25).unwrap(), 0.25, 1e-15);
        assert_close(swap_fidelity(0.9).unwrap(), 0.813333333333333, 1e-12);
        assert!(swap_fidelity(0.2).is_err());
        assert!(swap_fidelity(1.01).is_err());
    }

    #[test]
    fn swap_fidelity_inverse_known_values() {
        assert_close(swap_fidelity_inverse(1.0).unwrap(), 1.0, 1e-15);
        assert_close(swap_fidelity_inverse(0.85).unwrap(), 0.920820393249937, 1e-12);
        assert!(swap_fidelity_inverse(0.25).is_err());
        assert!(swap_fidelity_inverse(1.2).is_err());
    }

    #[test]
    fn swap_fidelity_inverse_round_trip_and_bisection() {
        // Closed-form inverse against both the forward map and an
        // independent bisection on it.
        for i in 0..100 {
            let t = 0.26 + (1.0 - 0.26) * (i as f64 + 0.5) / 100.0;
            let f = swap_fidelity_inverse(t).unwrap();
            assert_close(swap_fidelity(f).unwrap(), t, 1e-10);
            let (mut lo, mut hi) = (0.25, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if swap_fidelity(mid).unwrap() < t {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert_close(f, 0.5 * (lo + hi), 1e-10);
        }
    }

    #[test]
    fn swap_fidelity_monotone_and_contracting() {
        let mut prev = swap_fidelity(0.25).unwrap();
        for i in 1..=200 {
            let f = 0.25 + 0.75 * i as f64 / 200.0;
            let v = swap_fidelity(f).unwrap();
            assert!(v > prev, "not increasing at {f}");
            if f < 1.0 {
                assert!(v < f, "η({f}) = {v} not below the identity");
            }
            prev = v;
        }
    }

    #[test]
    fn dejmps_binary_round_values() {
        let s = BellDiagonalState::binary(0.9).unwrap();
        assert_close(
            round_success_prob(ProtocolId::DejmpsBinary, &s).unwrap(),
            0.82,
            1e-12,
        );
        let out = round_output_fidelity(ProtocolId::DejmpsBinary, &s).unwrap();
        assert_close(out.fidelity(), 0.987804878048780, 1e-12);
        assert!(out.is_class(NoiseClass::Binary));

        let s = BellDiagonalState::binary(0.85).unwrap();
        assert_close(
            round_success_prob(ProtocolId::DejmpsBinary, &s).unwrap(),
            0.745,
            1e-12,
        );
        let out = round_output_fidelity(ProtocolId::DejmpsBinary, &s).unwrap();
        assert_close(out.fidelity(), 0.969798657718121, 1e-12);
    }

    #[test]
    fn bbpssw_round_values() {
        let perfect = BellDiagonalState::werner(1.0).unwrap();
        assert_close(
            round_success_prob(ProtocolId::BbpsswWerner, &perfect).unwrap(),
            1.0,
            1e-15,
        );
        let out = round_output_fidelity(ProtocolId::BbpsswWerner, &perfect).unwrap();
        assert_close(out.fidelity(), 1.0, 1e-15);

        let s = BellDiagonalState::werner(0.9).unwrap();
        assert_close(
            round_success_prob(ProtocolId::BbpsswWerner, &s).unwrap(),
            0.875555555555556,
            1e-12,
        );
        let out = round_output_fidelity(ProtocolId::BbpsswWerner, &s).unwrap();
        assert_close(out.fidelity(), 0.926395939086294, 1e-12);
        assert!(out.is_class(NoiseClass::Werner));
    }

    #[test]
    fn dejmps_bell_diagonal_tracks_all_coefficients() {
        let s = BellDiagonalState::werner(0.9).unwrap();
        assert_close(
            round_success_prob(ProtocolId::DejmpsBellDiagonal, &s).unwrap(),
            0.875555555555556,
            1e-12,
        );
        let out = round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &s).unwrap();
        let [f1, f2, f3, f4] = out.coefficients();
        assert_close(f1, 0.926395939086294, 1e-12);
        assert_close(f2, 0.002538071065990, 1e-12);
        assert_close(f3, 0.002538071065990, 1e-12);
        assert_close(f4, 0.068527918781726, 1e-12);
        // The output leaves the Werner family; the residual concentrates
        // in |φ⁻⟩, which is what makes the second round so effective.
        assert!(!out.is_class(NoiseClass::Werner));
        let out2 = round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &out).unwrap();
        assert_close(out2.fidelity(), 0.988763544604423, 1e-12);
    }

    #[test]
    fn class_and_domain_errors() {
        let binary = BellDiagonalState::binary(0.9).unwrap();
        let werner = BellDiagonalState::werner(0.9).unwrap();
        assert!(matches!(
            round_success_prob(ProtocolId::BbpsswWerner, &binary),
            Err(BellError::ClassMismatch { .. })
        ));
        assert!(matches!(
            round_success_prob(ProtocolId::DejmpsBinary, &werner),
            Err(BellError::ClassMismatch { .. })
        ));
        let half = BellDiagonalState::binary(0.5).unwrap();
        assert!(matches!(
            round_output_fidelity(ProtocolId::DejmpsBinary, &half),
            Err(BellError::FidelityTooLow { .. })
        ));
        assert!(matches!(
            round_success_prob(ProtocolId::Pumping(NoiseClass::Werner), &werner),
            Err(BellError::AsymmetricProtocol(_))
        ));
        assert!(pump_round(&half, &binary).is_err());
    }

    #[test]
    fn monotone_improvement_on_supported_classes() {
        for i in 1..50 {
            let f = 0.5 + 0.5 * i as f64 / 50.0;
            let b = BellDiagonalState::binary(f).unwrap();
            let w = BellDiagonalState::werner(f).unwrap();
            assert!(
                round_output_fidelity(ProtocolId::DejmpsBinary, &b)
                    .unwrap()
                    .fidelity()
                    > f
            );
            assert!(
                round_output_fidelity(ProtocolId::BbpsswWerner, &w)
                    .unwrap()
                    .fidelity()
                    > f
            );
            assert!(
                round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &w)
                    .unwrap()
                    .fidelity()
                    > f
            );
        }
    }

    #[test]
    fn pump_round_matches_symmetric_dejmps() {
        for f in [0.6, 0.75, 0.9, 0.95] {
            let b = BellDiagonalState::binary(f).unwrap();
            let (p, out) = pump_round(&b, &b).unwrap();
            assert_eq!(p, round_success_prob(ProtocolId::DejmpsBinary, &b).unwrap());
            assert_eq!(
                out.fidelity(),
                round_output_fidelity(ProtocolId::DejmpsBinary, &b)
                    .unwrap()
                    .fidelity()
            );
            let w = BellDiagonalState::werner(f).unwrap();
            let (p, out) = pump_round(&w, &w).unwrap();
            assert_eq!(
                p,
                round_success_prob(ProtocolId::DejmpsBellDiagonal, &w).unwrap()
            );
            assert_eq!(
                out.coefficients(),
                round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &w)
                    .unwrap()
                    .coefficients()
            );
        }
    }

    #[test]
    fn pump_round_known_values() {
        let hi = BellDiagonalState::binary(0.95).unwrap();
        let lo = BellDiagonalState::binary(0.9).unwrap();
        let (p, out) = pump_round(&hi, &lo).unwrap();
        assert_close(p, 0.86, 1e-12);
        assert_close(out.fidelity(), 0.994186046511628, 1e-12);
        assert!(out.is_class(NoiseClass::Binary));

        let perfect = BellDiagonalState::binary(1.0).unwrap();
        let (p, out) = pump_round(&perfect, &perfect).unwrap();
        assert_close(p, 1.0, 1e-15);
        assert_close(out.fidelity(), 1.0, 1e-15);
    }

    mod circuit_oracle {
        //! Brute-force check of the purification round laws: enumerate all
        //! 16 Bell⊗Bell inputs, push each through the actual two-pair
        //! circuit on a 16-amplitude state vector, post-select on
        //! coinciding target measurements, and read the kept pair back off
        //! in the Bell basis. Entirely independent of the closed forms
        //! above.

        use super::*;
        use num_complex::Complex64;

        const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

        fn c(re: f64, im: f64) -> Complex64 {
            Complex64::new(re, im)
        }

        /// Bell vectors over basis |q_a q_b⟩, index = 2·q_a + q_b.
        fn bell(i: usize) -> [Complex64; 4] {
            let h = c(SQRT_HALF, 0.0);
            match i {
                0 => [h, c(0.0, 0.0), c(0.0, 0.0), h],
                1 => [c(0.0, 0.0), h, -h, c(0.0, 0.0)],
                2 => [c(0.0, 0.0), h, h, c(0.0, 0.0)],
                3 => [h, c(0.0, 0.0), c(0.0, 0.0), -h],
                _ => unreachable!(),
            }
        }

        /// Applies a 2×2 gate to qubit `q` (bit position in the index).
        fn apply_1q(state: &mut [Complex64; 16], q: usize, u: [[Complex64; 2]; 2]) {
            let bit = 1 << q;
            for idx in 0..16 {
                if idx & bit == 0 {
                    let (a, b) = (state[idx], state[idx | bit]);
                    state[idx] = u[0][0] * a + u[0][1] * b;
                    state[idx | bit] = u[1][0] * a + u[1][1] * b;
                }
            }
        }

        fn apply_cnot(state: &mut [Complex64; 16], control: usize, target: usize) {
            let (cb, tb) = (1 << control, 1 << target);
            for idx in 0..16 {
                if idx & cb != 0 && idx & tb == 0 {
                    state.swap(idx, idx | tb);
                }
            }
        }

        /// Runs the two-pair circuit on inputs bell(i) ⊗ bell(j).
        ///
        /// Qubit layout: bit3 = Alice source, bit2 = Bob source, bit1 =
        /// Alice target, bit0 = Bob target. Returns the keep probability
        /// (coinciding target outcomes) and the unnormalized Bell weights
        /// of the kept source pair.
        fn run(i: usize, j: usize, rotations: bool) -> (f64, [f64; 4]) {
            let (src, tgt) = (bell(i), bell(j));
            let mut state = [c(0.0, 0.0); 16];
            for (si, sv) in src.iter().enumerate() {
                for (ti, tv) in tgt.iter().enumerate() {
                    let (a1, b1) = (si >> 1, si & 1);
                    let (a2, b2) = (ti >> 1, ti & 1);
                    state[a1 << 3 | b1 << 2 | a2 << 1 | b2] = sv * tv;
                }
            }
            if rotations {
                // DEJMPS frame change: Rx(π/2) on Alice's qubits,
                // Rx(−π/2) on Bob's.
                let h = c(SQRT_HALF, 0.0);
                let mi = c(0.0, -SQRT_HALF);
                let pi = c(0.0, SQRT_HALF);
                let alice = [[h, mi], [mi, h]];
                let bob = [[h, pi], [pi, h]];
                apply_1q(&mut state, 3, alice);
                apply_1q(&mut state, 1, alice);
                apply_1q(&mut state, 2, bob);
                apply_1q(&mut state, 0, bob);
            }
            apply_cnot(&mut state, 3, 1);
            apply_cnot(&mut state, 2, 0);

            let mut keep_prob = 0.0;
            let mut weights = [0.0; 4];
            for outcome in [0usize, 0b11] {
                // Project target qubits (bits 1 and 0) on |m_a m_b⟩.
                let mut kept = [c(0.0, 0.0); 4];
                for a1 in 0..2 {
                    for b1 in 0..2 {
                        kept[a1 << 1 | b1] = state[a1 << 3 | b1 << 2 | outcome];
                    }
                }
                let prob: f64 = kept.iter().map(|v| v.norm_sqr()).sum();
                keep_prob += prob;
                for (k, w) in weights.iter_mut().enumerate() {
                    let overlap: Complex64 =
                        bell(k).iter().zip(&kept).map(|(b, v)| b.conj() * v).sum();
                    *w += overlap.norm_sqr();
                }
            }
            (keep_prob, weights)
        }

        /// Mixture-level law: success probability and output coefficients
        /// for Bell-diagonal inputs `a`, `b`.
        fn oracle(a: [f64; 4], b: [f64; 4], rotations: bool) -> (f64, [f64; 4]) {
            let mut success = 0.0;
            let mut out = [0.0; 4];
            for (i, &ai) in a.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    let w_in = ai * bj;
                    if w_in == 0.0 {
                        continue;
                    }
                    let (p, weights) = run(i, j, rotations);
                    success += w_in * p;
                    for (o, w) in out.iter_mut().zip(&weights) {
                        *o += w_in * w;
                    }
                }
            }
            for v in &mut out {
                *v /= success;
            }
            (success, out)
        }

        #[test]
        fn dejmps_symmetric_matches_circuit() {
            for f in [0.55, 0.7, 0.9, 0.97] {
                let s = BellDiagonalState::werner(f).unwrap();
                let (p, out) = oracle(s.coefficients(), s.coefficients(), true);
                assert_close(
                    p,
                    round_success_prob(ProtocolId::DejmpsBellDiagonal, &s).unwrap(),
                    1e-12,
                );
                let expect = round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &s)
                    .unwrap()
                    .coefficients();
                for k in 0..4 {
                    assert_close(out[k], expect[k], 1e-12);
                }
            }
        }

        #[test]
        fn dejmps_general_bell_diagonal_matches_circuit() {
            // Asymmetric coefficient pattern; exercises every term of the
            // four-coefficient update.
            let a = BellDiagonalState::new(0.62, 0.2, 0.08, 0.1).unwrap();
            let (p, out) = oracle(a.coefficients(), a.coefficients(), true);
            assert_close(
                p,
                round_success_prob(ProtocolId::DejmpsBellDiagonal, &a).unwrap(),
                1e-12,
            );
            let expect = round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &a)
                .unwrap()
                .coefficients();
            for k in 0..4 {
                assert_close(out[k], expect[k], 1e-12);
            }
        }

        #[test]
        fn pump_round_matches_circuit() {
            let pairs = [
                (
                    BellDiagonalState::new(0.9, 0.02, 0.03, 0.05).unwrap(),
                    BellDiagonalState::werner(0.85).unwrap(),
                ),
                (
                    BellDiagonalState::binary(0.95).unwrap(),
                    BellDiagonalState::binary(0.9).unwrap(),
                ),
                (
                    BellDiagonalState::new(0.7, 0.1, 0.15, 0.05).unwrap(),
                    BellDiagonalState::new(0.6, 0.25, 0.05, 0.1).unwrap(),
                ),
            ];
            for (primary, base) in pairs {
                let (p, out) = pump_round(&primary, &base).unwrap();
                let (p_oracle, out_oracle) =
                    oracle(primary.coefficients(), base.coefficients(), true);
                assert_close(p, p_oracle, 1e-12);
                let got = out.coefficients();
                for k in 0..4 {
                    assert_close(got[k], out_oracle[k], 1e-12);
                }
            }
        }

        #[test]
        fn bbpssw_matches_unrotated_circuit_plus_twirl() {
            for f in [0.6, 0.8, 0.9] {
                let s = BellDiagonalState::werner(f).unwrap();
                let (p, out) = oracle(s.coefficients(), s.coefficients(), false);
                assert_close(
                    p,
                    round_success_prob(ProtocolId::BbpsswWerner, &s).unwrap(),
                    1e-12,
                );
                // Twirling preserves the fidelity coefficient.
                assert_close(
                    out[0],
                    round_output_fidelity(ProtocolId::BbpsswWerner, &s)
                        .unwrap()
                        .fidelity(),
                    1e-12,
                );
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_state(min_fidelity: f64) -> impl Strategy<Value = BellDiagonalState> {
            // Spread at most (1 − min_fidelity) over the three tail
            // coefficients, proportionally to the draws.
            (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(move |(a, b, c)| {
                let budget = 1.0 - min_fidelity;
                let sum = (a + b + c).max(1.0);
                let tail = [a, b, c].map(|v| budget * v / sum);
                let f1 = 1.0 - tail[0] - tail[1] - tail[2];
                BellDiagonalState::new(f1, tail[0], tail[1], tail[2]).unwrap()
            })
        }

        proptest! {
            #[test]
            fn pump_round_outputs_normalized(
                a in arb_state(0.501),
                b in arb_state(0.501),
            ) {
                let (p, out) = pump_round(&a, &b).unwrap();
                prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
                let sum: f64 = out.coefficients().iter().sum();
                prop_assert!((sum - 1.0).abs() <= NORM_TOL);
            }

            #[test]
            fn symmetric_rounds_output_normalized(a in arb_state(0.501)) {
                let out = round_output_fidelity(ProtocolId::DejmpsBellDiagonal, &a).unwrap();
                let sum: f64 = out.coefficients().iter().sum();
                prop_assert!((sum - 1.0).abs() <= NORM_TOL);
                let p = round_success_prob(ProtocolId::DejmpsBellDiagonal, &a).unwrap();
                prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
            }
        }
    }
}

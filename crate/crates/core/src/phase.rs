//! Phase bookkeeping.
//!
//! Phases are carried as raw reals and only reduced to `[-π, π]` at the point
//! of complex exponentiation. Reduction subtracts the nearest multiple of 2π
//! using a two-term representation of 2π so that large arguments keep their
//! fractional part.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// Leading part of 2π (the correctly rounded double).
const TAU_HI: f64 = TAU;
/// Remainder 2π - TAU_HI.
const TAU_LO: f64 = 2.449_293_598_294_706_4e-16;

/// Reduce `phase` to the interval `[-π, π]`.
pub fn reduce(phase: f64) -> f64 {
    if phase.abs() <= std::f64::consts::PI {
        return phase;
    }
    let k = (phase / TAU).round();
    // fma keeps k * TAU_HI exact in the subtraction.
    let r = (-k).mul_add(TAU_HI, phase);
    (-k).mul_add(TAU_LO, r)
}

/// `e^{i phase}` with argument reduction.
pub fn cis(phase: f64) -> Complex64 {
    let (s, c) = reduce(phase).sin_cos();
    Complex64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_phases_pass_through() {
        assert_eq!(reduce(1.0), 1.0);
        assert_eq!(reduce(-3.0), -3.0);
    }

    #[test]
    fn multiples_of_tau_reduce_to_zero() {
        for k in [1.0, 7.0, 1e6, 1e9] {
            let r = reduce(k * TAU);
            // k * TAU is itself rounded, so the residue is bounded by its ulp.
            assert!(r.abs() <= (k * TAU) * f64::EPSILON, "k = {k}: {r}");
        }
    }

    #[test]
    fn compensated_reduction_beats_naive_for_large_arguments() {
        // 1e8 * 2π + 0.5, built from the two-term constant.
        let k = 1e8;
        let x = k * TAU_HI + 0.5;
        // x - k·2π in double-double: the product error of k·TAU_HI is exact
        // via fma and x - p is exact because the operands are close.
        let p = k * TAU_HI;
        let e = k.mul_add(TAU_HI, -p);
        let exact_remainder = (x - p) - e - k * TAU_LO;
        let r = reduce(x);
        assert!((r - exact_remainder).abs() < 1e-12, "{r} vs {exact_remainder}");
        let naive = x % TAU;
        assert!((naive - exact_remainder).abs() > 1e-9);
    }

    proptest! {
        #[test]
        fn reduced_phase_is_in_range_and_equivalent(x in -1e6f64..1e6) {
            let r = reduce(x);
            prop_assert!(r.abs() <= std::f64::consts::PI + 1e-12);
            let a = cis(x);
            let b = Complex64::new(x.cos(), x.sin());
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}

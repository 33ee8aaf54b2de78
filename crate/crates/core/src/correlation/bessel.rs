//! Bessel function of the first kind, order one.
//!
//! Below [`SERIES_LIMIT`] the power series is summed in double-double
//! arithmetic so that the alternating terms (up to ~1e7 in magnitude near the
//! limit) cancel without losing the result. Above it the Hankel asymptotic
//! expansion is truncated at its smallest term, which is below 1e-20 there.

use std::f64::consts::{FRAC_PI_4, PI};

/// Switch point between the series and the asymptotic expansion.
pub const SERIES_LIMIT: f64 = 25.0;

/// First positive zero of `J1`.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512_3;

/// `J1(x)`, absolute error below 1e-14 for all finite `x`.
pub fn j1(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let ax = x.abs();
    let v = if ax < SERIES_LIMIT {
        series(ax)
    } else {
        asymptotic(ax)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// `2 J1(z) / z`, with the limit value 1 at `z = 0`.
pub fn airy_amplitude(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        // 1 - z²/8 + ...; the quadratic term is below 1e-17 here.
        return 1.0 - z * z / 8.0;
    }
    2.0 * j1(z) / z
}

fn series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    // term_k = (-1)^k (x/2)^{2k+1} / (k! (k+1)!)
    let half = Dd::from_f64(x * 0.5);
    let q = half.mul(half).neg();
    let mut term = half;
    let mut sum = term;
    for k in 0..200 {
        let kk = k as f64;
        term = term.mul(q).div_f64((kk + 1.0) * (kk + 2.0));
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) {
            break;
        }
    }
    sum.hi + sum.lo
}

fn asymptotic(x: f64) -> f64 {
    // J1(x) = sqrt(2/(πx)) (P cos χ - Q sin χ), χ = x - 3π/4, with
    // a_k = Π_{j=1..k} (4 - (2j-1)²) / (k! 8^k x^k),
    // P = Σ (-1)^m a_{2m},  Q = Σ (-1)^m a_{2m+1}.
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kk = k as f64;
        let next = a * (4.0 - (2.0 * kk - 1.0).powi(2)) / (kk * 8.0 * x);
        if next.abs() >= prev {
            break;
        }
        prev = next.abs();
        a = next;
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-20 {
            break;
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    let (s, c) = crate::phase::reduce(chi).sin_cos();
    (2.0 / (PI * x)).sqrt() * (p * c - q * s)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from_f64(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn neg(self) -> Self {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        // remainder of self - q1 * d, exact via fma
        let r = (-q1).mul_add(d, self.hi) + self.lo;
        let q2 = r / d;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// J1(x) = (1/2π) ∫_{-π}^{π} cos(τ - x sin τ) dτ. The integrand is smooth
    /// and periodic, so the trapezoidal rule converges geometrically.
    fn j1_integral(x: f64) -> f64 {
        let n = 512;
        let h = 2.0 * PI / n as f64;
        (0..n)
            .map(|i| {
                let t = -PI + i as f64 * h;
                (t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn matches_integral_representation() {
        let mut worst: f64 = 0.0;
        let mut x = 0.0;
        while x <= 80.0 {
            worst = worst.max((j1(x) - j1_integral(x)).abs());
            x += 0.0173;
        }
        assert!(worst < 1e-14, "worst abs error {worst:e}");
    }

    #[test]
    fn continuous_across_the_split() {
        let lo = series(SERIES_LIMIT);
        let hi = asymptotic(SERIES_LIMIT);
        assert!((lo - hi).abs() < 1e-15, "{lo} vs {hi}");
    }

    #[test]
    fn known_values() {
        // Reference values from tables (Abramowitz & Stegun 9.1).
        assert!((j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((j1(10.0) - 0.043_472_746_168_861_44).abs() < 1e-15);
        assert_eq!(j1(0.0), 0.0);
        assert_eq!(j1(-2.0), -j1(2.0));
    }

    #[test]
    fn first_zero_by_bisection_on_the_oracle() {
        let (mut lo, mut hi) = (3.0, 4.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if j1_integral(lo) * j1_integral(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root - J1_FIRST_ZERO).abs() < 1e-12, "{root}");
        assert!(airy_amplitude(J1_FIRST_ZERO).abs() < 1e-15);
    }

    #[test]
    fn airy_amplitude_limit_and_tail_bound() {
        assert_eq!(airy_amplitude(0.0), 1.0);
        assert!((airy_amplitude(1e-9) - 1.0).abs() < 1e-16);
        // |2 J1(z)/z| <= min(1, C z^{-3/2}); sup of 2|J1(z)| sqrt(z) is about 1.65 (near z = 2.2).
        let c = 1.7;
        let mut z: f64 = 0.01;
        while z < 500.0 {
            let a = airy_amplitude(z).abs();
            assert!(a <= 1.0f64.min(c * z.powf(-1.5)) + 1e-15, "z = {z}: {a}");
            z *= 1.05;
        }
    }
}

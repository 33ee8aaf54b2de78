//! Gauss–Legendre rules and the mapped-disc product rule.

use std::f64::consts::{PI, TAU};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product rule over the unit disc in polar coordinates: `radial` nodes on
/// `ρ ∈ [0, 1]` (weight includes the Jacobian `ρ`) times `angular` nodes on
/// `t ∈ [0, 2π)`. Weights sum to π.
#[derive(Debug, Clone)]
pub struct DiscRule {
    /// `(ρ cos t, ρ sin t, weight)`
    pub points: Vec<(f64, f64, f64)>,
}

impl DiscRule {
    pub fn new(radial: usize, angular: usize) -> Self {
        let (rn, rw) = gauss_legendre(radial);
        let (an, aw) = gauss_legendre(angular);
        let mut points = Vec::with_capacity(radial * angular);
        for (&r, &wr) in rn.iter().zip(&rw) {
            let rho = 0.5 * (r + 1.0);
            let wrho = 0.5 * wr * rho;
            for (&a, &wa) in an.iter().zip(&aw) {
                let t = PI * (a + 1.0);
                let wt = 0.5 * TAU * wa;
                let (s, c) = t.sin_cos();
                points.push((rho * c, rho * s, wrho * wt));
            }
        }
        Self { points }
    }
}

//! Windowed, zero-padded power spectra.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.5 * (1.0 - (TAU * i as f64 / (n - 1) as f64).cos())).collect()
}

/// Length of the padded transform: `factor` times the next power of two.
pub fn padded_len(n: usize, factor: usize) -> usize {
    n.next_power_of_two() * factor.max(1)
}

/// `|FFT(w · y)|²` on bins `0..=N/2` of an `N`-point transform.
pub fn power_1d(y: &[f64], pad: usize) -> Vec<f64> {
    let n = padded_len(y.len(), pad);
    let w = hann(y.len());
    let mut buf: Vec<Complex64> = y.iter().zip(&w).map(|(v, w)| Complex64::new(v * w, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Full-plane `|FFT2(w ⊗ w · z)|²` of a row-major `nx × ny` grid, padded to
/// `(NX, NY)`; returned row-major with `NX` columns.
pub fn power_2d(z: &[f64], nx: usize, ny: usize, pad: usize) -> (Vec<f64>, usize, usize) {
    let (px, py) = (padded_len(nx, pad), padded_len(ny, pad));
    let (wx, wy) = (hann(nx), hann(ny));
    let mut grid = vec![Complex64::new(0.0, 0.0); px * py];
    for iy in 0..ny {
        for ix in 0..nx {
            grid[iy * px + ix] = Complex64::new(z[iy * nx + ix] * wx[ix] * wy[iy], 0.0);
        }
    }
    let mut planner = FftPlanner::new();
    let fx = planner.plan_fft_forward(px);
    for row in grid.chunks_mut(px) {
        fx.process(row);
    }
    let fy = planner.plan_fft_forward(py);
    let mut col = vec![Complex64::new(0.0, 0.0); py];
    for ix in 0..px {
        for iy in 0..py {
            col[iy] = grid[iy * px + ix];
        }
        fy.process(&mut col);
        for iy in 0..py {
            grid[iy * px + ix] = col[iy];
        }
    }
    (grid.iter().map(|c| c.norm_sqr()).collect(), px, py)
}

/// Vertex offset of the parabola through three equally spaced samples,
/// in units of the spacing, clamped to `[-0.5, 0.5]`.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Signed bin index of `k` in an `n`-point transform.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k > n / 2 {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_shape() {
        let w = hann(5);
        assert_eq!(w[0], 0.0);
        assert!((w[2] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[3]).abs() < 1e-15);
    }

    #[test]
    fn sine_peak_lands_on_its_frequency() {
        let h = 0.1;
        let f = 1.37;
        let y: Vec<f64> = (0..200).map(|i| (TAU * f * i as f64 * h).cos()).collect();
        let p = power_1d(&y, 16);
        let n = padded_len(200, 16);
        let k = (1..p.len() - 1).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let d = parabolic_offset(p[k - 1], p[k], p[k + 1]);
        let est = (k as f64 + d) / (n as f64 * h);
        assert!((est - f).abs() < 1e-3 * f, "{est}");
    }

    #[test]
    fn plane_wave_peak_in_2d() {
        let (nx, ny, h) = (32, 32, 0.25);
        let (kx, ky) = (0.5, -0.75);
        let z: Vec<f64> = (0..ny)
            .flat_map(|iy| (0..nx).map(move |ix| (TAU * (kx * ix as f64 * h + ky * iy as f64 * h)).cos()))
            .collect();
        let (p, px, py) = power_2d(&z, nx, ny, 4);
        let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let (bx, by) = (signed_bin(best % px, px), signed_bin(best / px, py));
        let (fx, fy) = (bx as f64 / (px as f64 * h), by as f64 / (py as f64 * h));
        // either member of the ± pair
        let ok = ((fx - kx).abs() < 0.02 && (fy - ky).abs() < 0.02) || ((fx + kx).abs() < 0.02 && (fy + ky).abs() < 0.02);
        assert!(ok, "{fx} {fy}");
    }
}

//! Recovery of source geometry from correlation curves.
//!
//! - [`estimate_diameter`]: the first zero of a single-disc envelope gives
//!   the angular diameter through `z = j₁,₁`.
//! - [`estimate_separation`]: the dominant frequency of the cross-wavelength
//!   oscillation gives the separation of two sources.
//! - [`extract_center_vectors`]: the 2D spectrum of a correlation map gives
//!   `c_p/λ_p - c_q/λ_q` for every cross-wavelength pair.

pub mod center;
pub mod spectrum;

pub use center::{extract_center_vectors, CenterSettings, CenterVector, CenterVectors};

use crate::correlation::bessel::{airy_amplitude, J1_FIRST_ZERO};
use crate::correlation::CorrelationCurve;
use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Samples must be spaced equally to this relative tolerance.
const UNIFORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterEstimate {
    pub wavelength: f64,
    /// Baseline of the first envelope zero, meters.
    pub first_zero: f64,
    pub angular_diameter: f64,
    /// One-sigma uncertainty of `angular_diameter`.
    pub uncertainty: f64,
    /// Sample spacing around the zero, meters.
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterSettings {
    /// A local minimum of `G - plateau` counts as the envelope zero only if
    /// it is below this fraction of the peak.
    pub zero_fraction: f64,
    /// Fit window for the envelope model, as a multiple of the first zero.
    pub fit_span: f64,
}

impl Default for DiameterSettings {
    fn default() -> Self {
        Self {
            zero_fraction: 0.1,
            fit_span: 1.25,
        }
    }
}

/// Angular diameter of a uniform disc from a plateau-normalized single-source
/// curve.
///
/// The zero is bracketed at the first deep local minimum of `G - plateau`
/// and located by a quadratic fit to the signed square root (the envelope
/// changes sign there). The location is then refined by fitting
/// `A (2J₁(kx)/(kx))²` over the main lobe, weighted by the curve's error
/// bars when it has them.
pub fn estimate_diameter(curve: &CorrelationCurve, wavelength: f64) -> Result<DiameterEstimate> {
    estimate_diameter_with(curve, wavelength, &DiameterSettings::default())
}

pub fn estimate_diameter_with(curve: &CorrelationCurve, wavelength: f64, settings: &DiameterSettings) -> Result<DiameterEstimate> {
    if !(wavelength > 0.0) {
        return Err(Error::invalid("wavelength", "must be positive"));
    }
    let pts = curve.points();
    if pts.len() < 5 {
        return Err(Error::InsufficientBaseline(format!("{} samples; need at least 5", pts.len())));
    }
    let plateau = curve.normalization.plateau;
    let x: Vec<f64> = pts.iter().map(|p| p.separation).collect();
    let e: Vec<f64> = pts.iter().map(|p| p.value - plateau).collect();

    let mut peak = f64::NEG_INFINITY;
    let mut found = None;
    for i in 1..e.len() - 1 {
        peak = peak.max(e[i - 1]);
        if peak > 0.0 && e[i] <= e[i - 1] && e[i] < e[i + 1] && e[i] < settings.zero_fraction * peak {
            found = Some(i);
            break;
        }
    }
    let i = found.ok_or_else(|| {
        Error::InsufficientBaseline(format!(
            "no envelope zero between {} m and {} m",
            x[0],
            x[x.len() - 1]
        ))
    })?;

    let coarse = signed_root(&x, &e, i);
    let spacing = 0.5 * (x[(i + 1).min(x.len() - 1)] - x[i - 1]);
    let (k, k_sigma) = fit_envelope(curve, plateau, J1_FIRST_ZERO / coarse, settings.fit_span * coarse)?;
    let first_zero = J1_FIRST_ZERO / k;
    let angular_diameter = J1_FIRST_ZERO * wavelength / (PI * first_zero);
    Ok(DiameterEstimate {
        wavelength,
        first_zero,
        angular_diameter,
        uncertainty: angular_diameter * k_sigma / k,
        spacing,
    })
}

/// Root of a least-squares quadratic through the signed square root of `e`
/// around the minimum at `i`.
fn signed_root(x: &[f64], e: &[f64], i: usize) -> f64 {
    let lo = i.saturating_sub(3);
    let hi = (i + 3).min(x.len() - 1);
    let zero_left = e[i - 1] < e[(i + 1).min(x.len() - 1)];
    let s: Vec<f64> = (lo..=hi)
        .map(|j| {
            let mag = e[j].max(0.0).sqrt();
            let positive = j < i || (j == i && !zero_left);
            if positive {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let xs: Vec<f64> = (lo..=hi).map(|j| x[j] - x[i]).collect();
    match quadratic_fit(&xs, &s) {
        Some([c0, c1, c2]) => {
            let roots = quadratic_roots(c2, c1, c0);
            let h = x[(i + 1).min(x.len() - 1)] - x[i - 1];
            roots
                .into_iter()
                .filter(|r| r.abs() <= h)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .map_or(x[i], |r| x[i] + r)
        }
        None => x[i],
    }
}

fn quadratic_fit(x: &[f64], y: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = [1.0, xi, xi * xi];
        for r in 0..3 {
            v[r] += b[r] * yi;
            for c in 0..3 {
                m[r][c] += b[r] * b[c];
            }
        }
    }
    solve3(m, v)
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        v.swap(c, p);
        for r in c + 1..3 {
            let f = m[r][c] / m[c][c];
            for k in c..3 {
                m[r][k] -= f * m[c][k];
            }
            v[r] -= f * v[c];
        }
    }
    let mut out = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|k| m[r][k] * out[k]).sum();
        out[r] = (v[r] - s) / m[r][r];
    }
    Some(out)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![];
    if q != 0.0 {
        r.push(c / q);
    }
    r.push(q / a);
    r
}

/// Gauss–Newton fit of `A airy(k x)²` to `G - plateau` for `x ≤ span`.
/// Returns `k` and its standard error.
fn fit_envelope(curve: &CorrelationCurve, plateau: f64, k0: f64, span: f64) -> Result<(f64, f64)> {
    let pts: Vec<_> = curve.points().iter().filter(|p| p.separation <= span).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientBaseline("too few samples inside the first envelope lobe".into()));
    }
    let weighted = pts.iter().all(|p| p.error.is_some_and(|e| e > 0.0));
    let w: Vec<f64> = pts
        .iter()
        .map(|p| if weighted { 1.0 / p.error.unwrap().powi(2) } else { 1.0 })
        .collect();
    let model = |a: f64, k: f64, x: f64| a * airy_amplitude(k * x).powi(2);
    let (mut a, mut k) = (pts.iter().map(|p| p.value - plateau).fold(f64::NEG_INFINITY, f64::max).max(1e-300), k0);
    let mut cov = [[0.0; 2]; 2];
    let mut chi2 = 0.0;
    for _ in 0..100 {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        chi2 = 0.0;
        for (p, wi) in pts.iter().zip(&w) {
            let x = p.separation;
            let f = airy_amplitude(k * x).powi(2);
            let dk = 1e-7 * k;
            let dfdk = a * (airy_amplitude((k + dk) * x).powi(2) - airy_amplitude((k - dk) * x).powi(2)) / (2.0 * dk);
            let jac = [f, dfdk];
            let r = (p.value - plateau) - model(a, k, x);
            chi2 += wi * r * r;
            for i in 0..2 {
                jtr[i] += wi * jac[i] * r;
                for j in 0..2 {
                    jtj[i][j] += wi * jac[i] * jac[j];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if !(det.abs() > 0.0) {
            return Err(Error::InsufficientBaseline("envelope fit is degenerate".into()));
        }
        cov = [[jtj[1][1] / det, -jtj[0][1] / det], [-jtj[1][0] / det, jtj[0][0] / det]];
        let da = cov[0][0] * jtr[0] + cov[0][1] * jtr[1];
        let dk = cov[1][0] * jtr[0] + cov[1][1] * jtr[1];
        a += da;
        // keep the step inside the bracket found by the coarse stage
        k += dk.clamp(-0.2 * k, 0.2 * k);
        if dk.abs() < 1e-13 * k && da.abs() < 1e-13 * a.abs() {
            break;
        }
    }
    let dof = pts.len().saturating_sub(2).max(1) as f64;
    let scale = if weighted { 1.0 } else { chi2 / dof };
    Ok((k, (cov[1][1] * scale).max(0.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationSettings {
    /// Peak-to-largest-other-feature power ratio required, in dB.
    pub snr_threshold_db: f64,
    /// Zero-padding factor on top of the next power of two.
    pub padding: usize,
    /// Expected oscillation frequency (cycles/m) for the Nyquist guard.
    pub expected_frequency: Option<f64>,
    /// Source distance; when given the physical separation is reported.
    pub distance: Option<f64>,
}

impl Default for SeparationSettings {
    fn default() -> Self {
        Self {
            snr_threshold_db: 10.0,
            padding: 16,
            expected_frequency: None,
            distance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationEstimate {
    /// Dominant spatial frequency, cycles per meter of baseline.
    pub frequency: f64,
    /// `2 ν / (1/λ1 + 1/λ2)`, radians.
    pub angular_separation: f64,
    /// `angular_separation · L`, when the distance is known.
    pub separation: Option<f64>,
    /// Half width at half maximum of the spectral peak, in radians.
    pub angular_width: f64,
    pub snr_db: f64,
}

/// Power spectrum of `G - plateau` on a uniform grid. A grid starting at
/// zero baseline is mirrored first (`G` is even in the baseline).
/// Returns `(power, frequency step)`.
pub fn curve_spectrum(curve: &CorrelationCurve, pad: usize) -> Result<(Vec<f64>, f64)> {
    let x = curve.separations();
    if x.len() < 8 {
        return Err(Error::InsufficientBaseline(format!("{} samples; need at least 8", x.len())));
    }
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > UNIFORM_TOLERANCE * h) {
        return Err(Error::invalid("curve", "spectral estimation needs a uniform baseline grid"));
    }
    let plateau = curve.normalization.plateau;
    let y: Vec<f64> = curve.values().iter().map(|v| v - plateau).collect();
    let series = if x[0].abs() <= 1e-9 * h {
        let mut m: Vec<f64> = y[1..].iter().rev().copied().collect();
        m.extend_from_slice(&y);
        m
    } else {
        y
    };
    let n = spectrum::padded_len(series.len(), pad);
    Ok((spectrum::power_1d(&series, pad), 1.0 / (n as f64 * h)))
}

/// Frequency of the strongest positive-frequency spectral peak and its
/// signal-to-noise ratio: peak power over the largest power outside the
/// peak's lobe (DC included).
pub fn dominant_frequency(power: &[f64], df: f64) -> Option<(f64, f64, f64)> {
    let n = power.len();
    if n < 3 {
        return None;
    }
    let k = (1..n - 1)
        .filter(|&k| power[k] >= power[k - 1] && power[k] >= power[k + 1] && power[k] > 0.0)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))?;
    let mut lo = k;
    while lo > 0 && power[lo - 1] < power[lo] {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < n && power[hi + 1] < power[hi] {
        hi += 1;
    }
    let other = power[..lo].iter().chain(&power[hi + 1..]).fold(0.0f64, |m, &p| m.max(p));
    let snr = if other > 0.0 { 10.0 * (power[k] / other).log10() } else { f64::INFINITY };
    let d = spectrum::parabolic_offset(power[k - 1], power[k], power[k + 1]);
    // half-power half width by linear interpolation on each side
    let half = 0.5 * power[k];
    let side = |dir: i64| {
        let mut j = k as i64;
        while j + dir >= 0 && ((j + dir) as usize) < n && power[(j + dir) as usize] > half {
            j += dir;
        }
        let (a, b) = (j as usize, (j + dir).clamp(0, n as i64 - 1) as usize);
        if a == b || power[a] == power[b] {
            return (j - k as i64).abs() as f64;
        }
        (j - k as i64).abs() as f64 + (power[a] - half) / (power[a] - power[b])
    };
    let hwhm = 0.5 * (side(-1) + side(1));
    Some(((k as f64 + d) * df, snr, hwhm * df))
}

/// Separation of two sources from the oscillation in a correlation curve.
pub fn estimate_separation(curve: &CorrelationCurve, lambda1: f64, lambda2: f64, settings: &SeparationSettings) -> Result<SeparationEstimate> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(Error::invalid("wavelength", "must be positive"));
    }
    let x = curve.separations();
    if x.len() >= 2 {
        let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let nyquist = 0.5 / h;
        if let Some(f) = settings.expected_frequency {
            if f > nyquist {
                return Err(Error::Nyquist { expected: f, nyquist });
            }
        }
    }
    let (power, df) = curve_spectrum(curve, settings.padding)?;
    let (frequency, snr_db, hwhm) = dominant_frequency(&power, df).ok_or(Error::NoOscillation {
        snr_db: f64::NEG_INFINITY,
        threshold_db: settings.snr_threshold_db,
    })?;
    if !(snr_db >= settings.snr_threshold_db) {
        return Err(Error::NoOscillation {
            snr_db,
            threshold_db: settings.snr_threshold_db,
        });
    }
    let inv = 1.0 / lambda1 + 1.0 / lambda2;
    let angular_separation = 2.0 * frequency / inv;
    Ok(SeparationEstimate {
        frequency,
        angular_separation,
        separation: settings.distance.map(|l| angular_separation * l),
        angular_width: 2.0 * hwhm / inv,
        snr_db,
    })
}

/// Structured estimation output: `key: value` text and CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub key: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
    pub unit: &'static str,
}

pub const REPORT_CSV_HEADER: &str = "quantity,value,uncertainty,unit";

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: f64, uncertainty: Option<f64>, unit: &'static str) {
        self.entries.push(ReportEntry {
            key: key.into(),
            value,
            uncertainty,
            unit,
        });
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = write!(out, "{}: {}", e.key, e.value);
            if let Some(u) = e.uncertainty {
                let _ = write!(out, " +/- {u}");
            }
            if !e.unit.is_empty() {
                let _ = write!(out, " {}", e.unit);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\n");
        for e in &self.entries {
            let u = e.uncertainty.map(|u| u.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.key, e.value, u, e.unit);
        }
        out
    }
}

impl DiameterEstimate {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.push("wavelength", self.wavelength, None, "m");
        r.push("first_zero_baseline", self.first_zero, None, "m");
        r.push("sample_spacing", self.spacing, None, "m");
        r.push("angular_diameter", self.angular_diameter, Some(self.uncertainty), "rad");
        r
    }
}

impl SeparationEstimate {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.push("oscillation_frequency", self.frequency, None, "1/m");
        r.push("spectral_snr", self.snr_db, None, "dB");
        r.push("angular_separation", self.angular_separation, Some(self.angular_width), "rad");
        if let (Some(d), true) = (self.separation, self.angular_separation > 0.0) {
            r.push("separation", d, Some(d * self.angular_width / self.angular_separation), "m");
        }
        r
    }
}

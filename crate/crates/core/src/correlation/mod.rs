//! Mutual coherence integrals and two-point intensity correlations.
//!
//! Every source contributes a coherence value `γ̃(A, B) = ∫ I(r) e^{iΔφ} dr`.
//! In the far field this factors into a rapidly varying phase (the source
//! center and the quadratic detector term) and a slowly varying envelope. The
//! phase is kept as a raw real in [`CoherenceValue`] and only exponentiated
//! after it has been combined with the partner phase of a cross term, so the
//! same-source products cancel exactly.

pub mod bessel;
pub mod curve;
pub mod quadrature;

pub use curve::{
    CorrelationCurve, CorrelationMap, CurvePoint, Normalization, Variant, CURVE_HEADER, CURVE_HEADER_WITH_ERROR, MAP_HEADER,
};

use crate::error::{Error, Result};
use crate::phase;
use crate::sources::{
    farfield_unchecked, phase_delta_exact, Baseline, DiscSource, Position3, SampledSource, SourceModel, EXACT_PHASE_LIMIT,
};
use num_complex::Complex64;
use quadrature::DiscRule;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

/// Wavelengths closer than this (relative) belong to one group.
pub const WAVELENGTH_GROUP_TOLERANCE: f64 = 1e-9;

/// `γ̃(A, B) = amplitude · e^{i phase}` with the phase left unreduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceValue {
    pub phase: f64,
    pub amplitude: Complex64,
}

impl CoherenceValue {
    pub fn real(v: f64) -> Self {
        Self {
            phase: 0.0,
            amplitude: Complex64::new(v, 0.0),
        }
    }

    pub fn value(&self) -> Complex64 {
        self.amplitude * phase::cis(self.phase)
    }

    /// `self · other`, adding the raw phases before exponentiating.
    pub fn product(&self, other: &CoherenceValue) -> Complex64 {
        self.amplitude * other.amplitude * phase::cis(self.phase + other.phase)
    }
}

/// Closed-form far-field envelope of a uniform disc,
/// `f = e^{i quadratic_phase} · 2J1(z)/z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscEnvelope {
    pub quadratic_phase: f64,
    pub airy: f64,
    /// `z = (2π/λ)(ϑ/2)|r_A - r_B|`
    pub z: f64,
}

impl DiscEnvelope {
    pub fn value(&self) -> Complex64 {
        self.airy * phase::cis(self.quadratic_phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    pub radial: usize,
    pub angular: usize,
    /// Largest allowed change between the configured grid and one with three
    /// quarters of the nodes per axis, relative to the source's total intensity.
    pub tolerance: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            radial: 64,
            angular: 64,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscMethod {
    #[default]
    ClosedForm,
    Quadrature,
}

fn disc_wavenumber(d: &DiscSource) -> f64 {
    TAU / (d.wavelength * d.distance())
}

/// Center and quadratic phase shared by the closed form and the quadrature:
/// `k(½|r_A|² - ½|r_B|² - (r_A - r_B)·c)`.
fn far_phase(center: &Position3, k: f64, bl: &Baseline) -> f64 {
    farfield_unchecked(center.x, center.y, k, bl)
}

pub fn f_disc_closed_form(src: &DiscSource, bl: &Baseline) -> DiscEnvelope {
    let k = disc_wavenumber(src);
    let quad = 0.5 * (bl.a.norm_sqr_transverse() - bl.b.norm_sqr_transverse());
    let z = TAU / src.wavelength * 0.5 * src.angular_diameter() * bl.separation();
    DiscEnvelope {
        quadratic_phase: k * quad,
        airy: bessel::airy_amplitude(z),
        z,
    }
}

fn disc_closed_form_coherence(src: &DiscSource, bl: &Baseline) -> CoherenceValue {
    let env = f_disc_closed_form(src, bl);
    CoherenceValue {
        phase: far_phase(&src.center, disc_wavenumber(src), bl),
        amplitude: Complex64::new(src.weight * env.airy, 0.0),
    }
}

fn disc_envelope_integral(src: &DiscSource, bl: &Baseline, rule: &DiscRule) -> Complex64 {
    let ka = disc_wavenumber(src) * src.radius;
    let d = bl.delta();
    let (dx, dy) = (ka * d.x, ka * d.y);
    let sum: Complex64 = rule
        .points
        .iter()
        .map(|&(ux, uy, w)| {
            let (s, c) = (-(dx * ux + dy * uy)).sin_cos();
            Complex64::new(w * c, w * s)
        })
        .sum();
    sum * (src.weight / PI)
}

/// Coherence integral of one source by numerical quadrature.
///
/// Discs use the mapped-disc Gauss–Legendre product rule on the slowly
/// varying part of the integrand; the center phase is carried separately.
/// Point sources are exact. Sampled sources are summed with their cell
/// weights, using the exact phase where it is representable and the
/// far-field phase otherwise.
pub fn gamma_quadrature(src: &SourceModel, bl: &Baseline, settings: &QuadratureSettings) -> Result<CoherenceValue> {
    match src {
        SourceModel::Disc(d) => {
            let fine = DiscRule::new(settings.radial, settings.angular);
            let coarse = DiscRule::new(coarser(settings.radial), coarser(settings.angular));
            disc_quadrature(d, bl, &fine, &coarse, settings.tolerance)
        }
        other => Ok(point_or_sampled(other, bl)?),
    }
}

/// Node count of the comparison grid used for the convergence check.
fn coarser(n: usize) -> usize {
    (3 * n / 4).max(1)
}

fn disc_quadrature(d: &DiscSource, bl: &Baseline, fine: &DiscRule, coarse: &DiscRule, tolerance: f64) -> Result<CoherenceValue> {
    let a = disc_envelope_integral(d, bl, fine);
    let b = disc_envelope_integral(d, bl, coarse);
    let change = (a - b).norm() / d.weight.max(f64::MIN_POSITIVE);
    if change > tolerance {
        return Err(Error::NonConvergence { change, tolerance });
    }
    Ok(CoherenceValue {
        phase: far_phase(&d.center, disc_wavenumber(d), bl),
        amplitude: a,
    })
}

pub(crate) fn exact_regime(points: impl Iterator<Item = Position3>, wavelength: f64, bl: &Baseline) -> bool {
    points
        .map(|p| p.distance(&bl.a).max(p.distance(&bl.b)) / wavelength)
        .all(|r| r < EXACT_PHASE_LIMIT)
}

fn point_or_sampled(src: &SourceModel, bl: &Baseline) -> Result<CoherenceValue> {
    match src {
        SourceModel::Point(p) => {
            if exact_regime(std::iter::once(p.center), p.wavelength, bl) {
                Ok(CoherenceValue {
                    phase: phase_delta_exact(&p.center, p.wavelength, bl)?,
                    amplitude: Complex64::new(p.weight, 0.0),
                })
            } else {
                if !(p.center.z > 0.0) {
                    return Err(Error::invalid("center", "far-field point source needs z > 0"));
                }
                let k = TAU / (p.wavelength * p.center.z);
                Ok(CoherenceValue {
                    phase: far_phase(&p.center, k, bl),
                    amplitude: Complex64::new(p.weight, 0.0),
                })
            }
        }
        SourceModel::Sampled(s) => sampled_coherence(s, bl),
        SourceModel::Disc(_) => unreachable!("discs are handled by the caller"),
    }
}

fn sampled_coherence(s: &SampledSource, bl: &Baseline) -> Result<CoherenceValue> {
    if exact_regime(s.samples.iter().map(|x| x.position), s.wavelength, bl) {
        let mut acc = Complex64::new(0.0, 0.0);
        for x in &s.samples {
            let w = x.intensity * x.area;
            acc += w * phase::cis(phase_delta_exact(&x.position, s.wavelength, bl)?);
        }
        return Ok(CoherenceValue {
            phase: 0.0,
            amplitude: acc,
        });
    }
    let c = s.centroid();
    if !(c.z > 0.0) {
        return Err(Error::invalid("samples", "far-field sampled source needs z > 0"));
    }
    let k = TAU / (s.wavelength * c.z);
    let d = bl.delta();
    let acc: Complex64 = s
        .samples
        .iter()
        .map(|x| {
            let w = x.intensity * x.area;
            let arg = -k * (d.x * (x.position.x - c.x) + d.y * (x.position.y - c.y));
            w * Complex64::new(arg.cos(), arg.sin())
        })
        .sum();
    Ok(CoherenceValue {
        phase: far_phase(&c, k, bl),
        amplitude: acc,
    })
}

/// Evaluates coherence values and correlation functions for a fixed choice
/// of quadrature settings.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub settings: QuadratureSettings,
    pub disc_method: DiscMethod,
    fine: DiscRule,
    coarse: DiscRule,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self::new(QuadratureSettings::default(), DiscMethod::ClosedForm)
    }
}

/// Per-source ingredients of every correlation variant at one baseline.
#[derive(Debug, Clone)]
struct Terms {
    intensity_a: Vec<f64>,
    intensity_b: Vec<f64>,
    ab: Vec<CoherenceValue>,
    ba: Vec<CoherenceValue>,
    group: Vec<usize>,
}

impl Terms {
    fn pair(&self, p: usize, q: usize) -> Complex64 {
        self.ab[p].product(&self.ba[q])
    }

    fn singles(&self) -> f64 {
        self.intensity_a.iter().sum::<f64>() * self.intensity_b.iter().sum::<f64>()
    }

    fn sum_pairs(&self, include: impl Fn(usize, usize) -> bool) -> Complex64 {
        let n = self.ab.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..n {
            for q in 0..n {
                if include(self.group[p], self.group[q]) {
                    acc += self.pair(p, q);
                }
            }
        }
        acc
    }
}

/// Group labels for wavelengths, equal within [`WAVELENGTH_GROUP_TOLERANCE`].
/// Labels are assigned in order of increasing wavelength.
pub fn wavelength_groups(wavelengths: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..wavelengths.len()).collect();
    order.sort_by(|&i, &j| wavelengths[i].total_cmp(&wavelengths[j]));
    let mut groups = vec![0; wavelengths.len()];
    let mut label = 0;
    for w in order.windows(2) {
        let (a, b) = (wavelengths[w[0]], wavelengths[w[1]]);
        if (b - a).abs() > WAVELENGTH_GROUP_TOLERANCE * a.abs().max(b.abs()) {
            label += 1;
        }
        groups[w[1]] = label;
    }
    groups
}

fn canonical_order(sources: &[SourceModel]) -> Vec<&SourceModel> {
    let mut refs: Vec<&SourceModel> = sources.iter().collect();
    refs.sort_by(|a, b| {
        a.sort_key()
            .iter()
            .zip(b.sort_key().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    refs
}

impl Evaluator {
    pub fn new(settings: QuadratureSettings, disc_method: DiscMethod) -> Self {
        Self {
            settings,
            disc_method,
            fine: DiscRule::new(settings.radial, settings.angular),
            coarse: DiscRule::new(coarser(settings.radial), coarser(settings.angular)),
        }
    }

    pub fn gamma(&self, src: &SourceModel, bl: &Baseline) -> Result<CoherenceValue> {
        match (src, self.disc_method) {
            (SourceModel::Disc(d), DiscMethod::ClosedForm) => Ok(disc_closed_form_coherence(d, bl)),
            (SourceModel::Disc(d), DiscMethod::Quadrature) => {
                disc_quadrature(d, bl, &self.fine, &self.coarse, self.settings.tolerance)
            }
            (other, _) => point_or_sampled(other, bl),
        }
    }

    fn terms(&self, sources: &[SourceModel], bl: &Baseline) -> Result<Terms> {
        if sources.is_empty() {
            return Err(Error::invalid("sources", "at least one source is required"));
        }
        let ordered = canonical_order(sources);
        let wavelengths: Vec<f64> = ordered.iter().map(|s| s.wavelength()).collect();
        let mut t = Terms {
            intensity_a: Vec::with_capacity(ordered.len()),
            intensity_b: Vec::with_capacity(ordered.len()),
            ab: Vec::with_capacity(ordered.len()),
            ba: Vec::with_capacity(ordered.len()),
            group: wavelength_groups(&wavelengths),
        };
        let swapped = bl.swapped();
        for s in ordered {
            let total = s.total_intensity();
            t.intensity_a.push(total);
            t.intensity_b.push(total);
            t.ab.push(self.gamma(s, bl)?);
            t.ba.push(self.gamma(s, &swapped)?);
        }
        Ok(t)
    }

    /// Complex value of a correlation variant before taking the real part.
    pub fn g2_complex(&self, variant: Variant, sources: &[SourceModel], bl: &Baseline) -> Result<Complex64> {
        let t = self.terms(sources, bl)?;
        let singles = Complex64::new(t.singles(), 0.0);
        Ok(match variant {
            Variant::Single => {
                if sources.len() != 1 {
                    return Err(Error::invalid("sources", format!("single-source correlation got {} sources", sources.len())));
                }
                singles + t.pair(0, 0)
            }
            Variant::NoE2i2 => singles + t.sum_pairs(|g, h| g == h),
            Variant::E2i2 | Variant::Multi => singles + t.sum_pairs(|_, _| true),
            Variant::Delta => t.sum_pairs(|g, h| g != h),
        })
    }

    pub fn g2(&self, variant: Variant, sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
        Ok(self.g2_complex(variant, sources, bl)?.re)
    }

    pub fn g2_single(&self, src: &SourceModel, bl: &Baseline) -> Result<f64> {
        self.g2(Variant::Single, std::slice::from_ref(src), bl)
    }

    pub fn g2_no_e2i2(&self, sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
        self.g2(Variant::NoE2i2, sources, bl)
    }

    pub fn g2_e2i2(&self, sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
        self.g2(Variant::E2i2, sources, bl)
    }

    pub fn g2_delta(&self, sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
        self.g2(Variant::Delta, sources, bl)
    }

    /// Sample a variant along a sweep. Samples are evaluated independently
    /// (in parallel) and stored in order, so the result does not depend on
    /// scheduling.
    pub fn curve(&self, variant: Variant, sources: &[SourceModel], sweep: &Sweep, scale: f64) -> Result<CorrelationCurve> {
        let separations = sweep.separations();
        let values = separations
            .par_iter()
            .map(|&s| self.g2(variant, sources, &sweep.baseline(s)).map(|v| v * scale))
            .collect::<Result<Vec<f64>>>()?;
        CorrelationCurve::from_values(&separations, &values, variant, normalization(variant, sources, scale))
    }

    /// Sample a variant over a square grid of detector-A offsets.
    pub fn map(&self, variant: Variant, sources: &[SourceModel], half_width: f64, samples: usize) -> Result<CorrelationMap> {
        if samples < 2 || !(half_width > 0.0) {
            return Err(Error::invalid("grid", "need at least two samples per axis and a positive half width"));
        }
        let axis: Vec<f64> = (0..samples)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (samples - 1) as f64)
            .collect();
        let cells: Vec<(f64, f64)> = axis.iter().flat_map(|&y| axis.iter().map(move |&x| (x, y))).collect();
        let values = cells
            .par_iter()
            .map(|&(x, y)| self.g2(variant, sources, &Baseline::from_offset(x, y)))
            .collect::<Result<Vec<f64>>>()?;
        CorrelationMap::new(axis.clone(), axis, values, variant)
    }
}

/// Plateau bookkeeping for an analytic curve.
pub fn normalization(variant: Variant, sources: &[SourceModel], scale: f64) -> Normalization {
    let total: f64 = sources.iter().map(|s| s.total_intensity()).sum();
    Normalization {
        plateau: match variant {
            Variant::Delta => 0.0,
            _ => total * total * scale,
        },
        scale,
    }
}

/// Detector A moves along `direction` from the fixed detector B.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub reference: Position3,
    pub direction: (f64, f64),
    pub start: f64,
    pub stop: f64,
    pub samples: usize,
}

impl Sweep {
    pub fn along_x(start: f64, stop: f64, samples: usize) -> Self {
        Self {
            reference: Position3::origin(),
            direction: (1.0, 0.0),
            start,
            stop,
            samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::invalid("samples", "a sweep needs at least two samples"));
        }
        if !(self.stop > self.start) {
            return Err(Error::invalid("stop", "sweep stop must exceed start"));
        }
        let n = self.direction.0.hypot(self.direction.1);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("direction", "direction must be a nonzero vector"));
        }
        if self.reference.z != 0.0 {
            return Err(Error::invalid("reference", "detectors lie in the z = 0 plane"));
        }
        Ok(())
    }

    pub fn separations(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.samples - 1) as f64;
        (0..self.samples).map(|i| self.start + step * i as f64).collect()
    }

    pub fn baseline(&self, s: f64) -> Baseline {
        let n = self.direction.0.hypot(self.direction.1);
        let (ux, uy) = (self.direction.0 / n, self.direction.1 / n);
        let b = self.reference;
        Baseline::new(
            Position3 {
                x: b.x + s * ux,
                y: b.y + s * uy,
                z: 0.0,
            },
            b,
        )
    }
}

/// Free-function forms using the default evaluator (closed-form discs).
pub fn g2_single(src: &SourceModel, bl: &Baseline) -> Result<f64> {
    Evaluator::default().g2_single(src, bl)
}

pub fn g2_no_e2i2(sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
    Evaluator::default().g2_no_e2i2(sources, bl)
}

pub fn g2_e2i2(sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
    Evaluator::default().g2_e2i2(sources, bl)
}

pub fn g2_delta(sources: &[SourceModel], bl: &Baseline) -> Result<f64> {
    Evaluator::default().g2_delta(sources, bl)
}

#[cfg(test)]
mod tests;

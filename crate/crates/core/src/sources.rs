//! Emitters, detector geometry and propagation phases.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Above this path length in wavelengths the exact phase difference no longer
/// fits in a double; callers must use [`phase_delta_farfield`].
pub const EXACT_PHASE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::invalid("position", format!("non-finite component ({x}, {y}, {z})")));
        }
        Ok(Self { x, y, z })
    }

    pub const fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    pub fn sub(&self, other: &Position3) -> Position3 {
        Position3 {
            x: self.x - other.x,
            y: self.y - other.y,
            z: self.z - other.z,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_sqr_transverse(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        self.sub(other).norm()
    }
}

/// A pair of detector positions. Coincident detectors are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub a: Position3,
    pub b: Position3,
}

impl Baseline {
    pub fn new(a: Position3, b: Position3) -> Self {
        Self { a, b }
    }

    /// Detector A at `(x, y, 0)`, detector B at the origin.
    pub fn from_offset(x: f64, y: f64) -> Self {
        Self {
            a: Position3 { x, y, z: 0.0 },
            b: Position3::origin(),
        }
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a }
    }

    /// `r_A - r_B`.
    pub fn delta(&self) -> Position3 {
        self.a.sub(&self.b)
    }

    pub fn separation(&self) -> f64 {
        self.delta().norm()
    }

    fn in_detector_plane(&self) -> bool {
        self.a.z == 0.0 && self.b.z == 0.0
    }
}

/// Phase difference `(2π/λ)(|r - r_A| - |r - r_B|)` between the paths from
/// `r` to the two detectors.
///
/// Only valid while `|r - r_A| / λ` stays below [`EXACT_PHASE_LIMIT`]; larger
/// geometries are rejected rather than silently losing every significant digit.
pub fn phase_delta_exact(r: &Position3, wavelength: f64, bl: &Baseline) -> Result<f64> {
    check_wavelength(wavelength)?;
    let da = r.distance(&bl.a);
    let db = r.distance(&bl.b);
    let ratio = da.max(db) / wavelength;
    if ratio >= EXACT_PHASE_LIMIT {
        return Err(Error::ExactPhaseOutOfRange { ratio });
    }
    Ok(TAU / wavelength * (da - db))
}

/// Far-field phase difference for a source point `(x, y)` at distance `L` and
/// detectors in the `z = 0` plane.
pub fn phase_delta_farfield(x: f64, y: f64, wavelength: f64, distance: f64, bl: &Baseline) -> Result<f64> {
    check_wavelength(wavelength)?;
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::invalid("distance", format!("must be positive, got {distance}")));
    }
    if !bl.in_detector_plane() {
        return Err(Error::invalid("baseline", "far-field phase needs detectors in the z = 0 plane"));
    }
    Ok(farfield_unchecked(x, y, TAU / (wavelength * distance), bl))
}

/// `k (½|r_A|² - ½|r_B|² - (r_A - r_B)·(x, y))` with `k = 2π/(λL)`.
pub(crate) fn farfield_unchecked(x: f64, y: f64, k: f64, bl: &Baseline) -> f64 {
    let quad = 0.5 * (bl.a.norm_sqr_transverse() - bl.b.norm_sqr_transverse());
    let d = bl.delta();
    k * (quad - (d.x * x + d.y * y))
}

fn check_wavelength(wavelength: f64) -> Result<()> {
    if wavelength > 0.0 && wavelength.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("wavelength", format!("must be positive, got {wavelength}")))
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight >= 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("weight", format!("must be nonnegative, got {weight}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub center: Position3,
    pub wavelength: f64,
    pub weight: f64,
}

impl PointSource {
    pub fn new(center: Position3, wavelength: f64, weight: f64) -> Result<Self> {
        check_wavelength(wavelength)?;
        check_weight(weight)?;
        Ok(Self {
            center,
            wavelength,
            weight,
        })
    }
}

/// Uniform disc facing the detectors. Stores center and radius; the distance
/// is the center's `z` and the angular diameter is derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscSource {
    pub center: Position3,
    pub radius: f64,
    pub wavelength: f64,
    pub weight: f64,
}

impl DiscSource {
    pub fn new(center: Position3, radius: f64, wavelength: f64, weight: f64) -> Result<Self> {
        check_wavelength(wavelength)?;
        check_weight(weight)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        if !(center.z > 0.0) {
            return Err(Error::invalid("center", format!("disc must sit at z > 0, got z = {}", center.z)));
        }
        Ok(Self {
            center,
            radius,
            wavelength,
            weight,
        })
    }

    pub fn distance(&self) -> f64 {
        self.center.z
    }

    /// `2 arctan(a / L)`.
    pub fn angular_diameter_exact(&self) -> f64 {
        2.0 * (self.radius / self.distance()).atan()
    }

    /// `2a / L`, the form used by the far-field envelope.
    pub fn angular_diameter(&self) -> f64 {
        2.0 * self.radius / self.distance()
    }
}

/// One cell of a sampled intensity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensitySample {
    pub position: Position3,
    pub intensity: f64,
    /// Quadrature weight (cell area). Uniform grids use 1.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSource {
    pub samples: Vec<IntensitySample>,
    pub wavelength: f64,
}

impl SampledSource {
    /// Samples on a uniform grid: every cell gets unit area.
    pub fn uniform(points: Vec<(Position3, f64)>, wavelength: f64) -> Result<Self> {
        let samples = points
            .into_iter()
            .map(|(position, intensity)| IntensitySample {
                position,
                intensity,
                area: 1.0,
            })
            .collect();
        Self::weighted(samples, wavelength)
    }

    pub fn weighted(samples: Vec<IntensitySample>, wavelength: f64) -> Result<Self> {
        check_wavelength(wavelength)?;
        if samples.is_empty() {
            return Err(Error::invalid("samples", "sampled source needs at least one sample"));
        }
        for s in &samples {
            if !(s.intensity >= 0.0 && s.intensity.is_finite()) {
                return Err(Error::invalid("intensity", format!("must be nonnegative, got {}", s.intensity)));
            }
            if !(s.area > 0.0 && s.area.is_finite()) {
                return Err(Error::invalid("area", format!("must be positive, got {}", s.area)));
            }
        }
        Ok(Self { samples, wavelength })
    }

    pub fn total(&self) -> f64 {
        self.samples.iter().map(|s| s.intensity * s.area).sum()
    }

    /// Intensity-weighted centroid, used as the phase reference.
    pub fn centroid(&self) -> Position3 {
        let total = self.total();
        if total == 0.0 {
            return self.samples[0].position;
        }
        let mut c = Position3::origin();
        for s in &self.samples {
            let w = s.intensity * s.area / total;
            c.x += w * s.position.x;
            c.y += w * s.position.y;
            c.z += w * s.position.z;
        }
        c
    }

    /// Rescale intensities so the total equals `weight`.
    pub fn normalized(mut self, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        let total = self.total();
        if total == 0.0 {
            return Err(Error::invalid("samples", "cannot normalize a zero-intensity source"));
        }
        for s in &mut self.samples {
            s.intensity *= weight / total;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceModel {
    Point(PointSource),
    Disc(DiscSource),
    Sampled(SampledSource),
}

impl SourceModel {
    pub fn wavelength(&self) -> f64 {
        match self {
            SourceModel::Point(p) => p.wavelength,
            SourceModel::Disc(d) => d.wavelength,
            SourceModel::Sampled(s) => s.wavelength,
        }
    }

    /// Integrated intensity, `γ̃(x, x)`.
    pub fn total_intensity(&self) -> f64 {
        match self {
            SourceModel::Point(p) => p.weight,
            SourceModel::Disc(d) => d.weight,
            SourceModel::Sampled(s) => s.total(),
        }
    }

    pub fn center(&self) -> Position3 {
        match self {
            SourceModel::Point(p) => p.center,
            SourceModel::Disc(d) => d.center,
            SourceModel::Sampled(s) => s.centroid(),
        }
    }

    /// Copy with every intensity multiplied by `s`.
    pub fn scaled(&self, s: f64) -> SourceModel {
        match self {
            SourceModel::Point(p) => SourceModel::Point(PointSource {
                weight: p.weight * s,
                ..p.clone()
            }),
            SourceModel::Disc(d) => SourceModel::Disc(DiscSource {
                weight: d.weight * s,
                ..d.clone()
            }),
            SourceModel::Sampled(src) => {
                let mut src = src.clone();
                for sample in &mut src.samples {
                    sample.intensity *= s;
                }
                SourceModel::Sampled(src)
            }
        }
    }

    /// Total order used to make sums independent of the caller's source order.
    pub(crate) fn sort_key(&self) -> [f64; 6] {
        let c = self.center();
        let (kind, extent) = match self {
            SourceModel::Point(_) => (0.0, 0.0),
            SourceModel::Disc(d) => (1.0, d.radius),
            SourceModel::Sampled(s) => (2.0, s.samples.len() as f64),
        };
        [self.wavelength(), c.x, c.y, c.z, kind, extent + self.total_intensity()]
    }
}

impl From<PointSource> for SourceModel {
    fn from(p: PointSource) -> Self {
        SourceModel::Point(p)
    }
}

impl From<DiscSource> for SourceModel {
    fn from(d: DiscSource) -> Self {
        SourceModel::Disc(d)
    }
}

impl From<SampledSource> for SourceModel {
    fn from(s: SampledSource) -> Self {
        SourceModel::Sampled(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64, z: f64) -> Position3 {
        Position3::new(x, y, z).unwrap()
    }

    #[test]
    fn exact_phase_vanishes_for_coincident_detectors() {
        let bl = Baseline::new(Position3::origin(), Position3::origin());
        assert_eq!(phase_delta_exact(&p(0.0, 0.0, 10.0), 5e-7, &bl).unwrap(), 0.0);
    }

    #[test]
    fn exact_phase_on_a_345_triangle() {
        let bl = Baseline::new(p(3.0, 0.0, 0.0), Position3::origin());
        let phi = phase_delta_exact(&p(0.0, 0.0, 4.0), 1.0, &bl).unwrap();
        assert!((phi - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn exact_phase_rejects_bad_wavelength_and_range() {
        let bl = Baseline::from_offset(1.0, 0.0);
        assert!(phase_delta_exact(&p(0.0, 0.0, 1.0), 0.0, &bl).is_err());
        assert!(phase_delta_exact(&p(0.0, 0.0, 1.0), -1.0, &bl).is_err());
        let far = p(0.0, 0.0, 1e17);
        assert!(matches!(
            phase_delta_exact(&far, 5e-7, &bl),
            Err(Error::ExactPhaseOutOfRange { .. })
        ));
    }

    #[test]
    fn farfield_phase_special_cases() {
        let bl = Baseline::new(Position3::origin(), Position3::origin());
        assert_eq!(phase_delta_farfield(0.0, 0.0, 1e-6, 10.0, &bl).unwrap(), 0.0);

        let (xa, lambda, l) = (0.7, 5e-7, 3.0);
        let bl = Baseline::from_offset(xa, 0.0);
        let phi = phase_delta_farfield(0.0, 0.0, lambda, l, &bl).unwrap();
        let expected = PI * xa * xa / (lambda * l);
        assert!((phi - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn farfield_rejects_nonpositive_distance_and_off_plane_detectors() {
        let bl = Baseline::from_offset(1.0, 0.0);
        assert!(phase_delta_farfield(0.0, 0.0, 1e-6, 0.0, &bl).is_err());
        assert!(phase_delta_farfield(0.0, 0.0, 1e-6, -1.0, &bl).is_err());
        let lifted = Baseline::new(p(1.0, 0.0, 0.5), Position3::origin());
        assert!(phase_delta_farfield(0.0, 0.0, 1e-6, 1.0, &lifted).is_err());
    }

    #[test]
    fn position_rejects_non_finite() {
        assert!(Position3::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(Position3::new(0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn disc_validation_and_angular_diameter() {
        assert!(DiscSource::new(p(0.0, 0.0, 0.0), 1.0, 1e-6, 1.0).is_err());
        assert!(DiscSource::new(p(0.0, 0.0, 10.0), 0.0, 1e-6, 1.0).is_err());
        assert!(DiscSource::new(p(0.0, 0.0, 10.0), 1.0, 1e-6, -1.0).is_err());
        let d = DiscSource::new(p(0.0, 0.0, 1e4), 5.0, 1e-6, 1.0).unwrap();
        let (exact, small) = (d.angular_diameter_exact(), d.angular_diameter());
        assert!((small - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn sampled_source_validation() {
        assert!(SampledSource::uniform(vec![], 1e-6).is_err());
        assert!(SampledSource::uniform(vec![(Position3::origin(), -1.0)], 1e-6).is_err());
        let s = SampledSource::uniform(vec![(p(1.0, 0.0, 5.0), 1.0), (p(3.0, 0.0, 5.0), 3.0)], 1e-6)
            .unwrap()
            .normalized(2.0)
            .unwrap();
        assert!((s.total() - 2.0).abs() < 1e-15);
        assert!((s.centroid().x - 2.5).abs() < 1e-15);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -5.0f64..5.0
    }

    proptest! {
        #[test]
        fn exact_phase_is_antisymmetric(
            rx in coord(), ry in coord(), rz in 1.0f64..50.0,
            ax in coord(), ay in coord(), bx in coord(), by in coord(),
            lambda in 1e-7f64..1e-5,
        ) {
            let r = p(rx, ry, rz);
            let bl = Baseline::new(p(ax, ay, 0.0), p(bx, by, 0.0));
            let fwd = phase_delta_exact(&r, lambda, &bl).unwrap();
            let rev = phase_delta_exact(&r, lambda, &bl.swapped()).unwrap();
            prop_assert_eq!(fwd, -rev);
        }

        #[test]
        fn farfield_phase_is_antisymmetric(
            x in coord(), y in coord(), ax in coord(), ay in coord(),
            bx in coord(), by in coord(), l in 1.0f64..1e6,
        ) {
            let bl = Baseline::new(p(ax, ay, 0.0), p(bx, by, 0.0));
            let fwd = phase_delta_farfield(x, y, 5e-7, l, &bl).unwrap();
            let rev = phase_delta_farfield(x, y, 5e-7, l, &bl.swapped()).unwrap();
            prop_assert!((fwd + rev).abs() <= 1e-12 * fwd.abs().max(1.0));
        }

        // Desk scale: L = 1e4 |r_A|, so the next term of the expansion is far
        // below 1e-3 rad while doubles still resolve the exact difference.
        #[test]
        fn farfield_matches_exact_at_desk_scale(
            x in -1e-3f64..1e-3, y in -1e-3f64..1e-3,
            ax in -1e-2f64..1e-2, ay in -1e-2f64..1e-2,
            lambda in 4e-7f64..9e-7,
        ) {
            let ra = (ax * ax + ay * ay).sqrt().max(1e-3);
            let l = 1e4 * ra;
            let bl = Baseline::new(p(ax, ay, 0.0), Position3::origin());
            let exact = phase_delta_exact(&p(x, y, l), lambda, &bl).unwrap();
            let ff = phase_delta_farfield(x, y, lambda, l, &bl).unwrap();
            prop_assert!((exact - ff).abs() < 1e-3, "exact {} vs far-field {}", exact, ff);
        }

        #[test]
        fn small_angle_diameter_is_consistent(a in 1e-3f64..1.0, ratio in 1e-9f64..1e-3) {
            let d = DiscSource::new(p(0.0, 0.0, a / ratio), a, 1e-6, 1.0).unwrap();
            let exact = d.angular_diameter_exact();
            prop_assert!((d.angular_diameter() - exact).abs() / exact < 1e-6);
        }
    }

    #[test]
    fn farfield_error_shrinks_with_distance() {
        let bl = Baseline::from_offset(0.1, 0.04);
        let lambda = 6e-7;
        let (x, y) = (0.2, -0.1);
        let errs: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&l| {
                let exact = phase_delta_exact(&p(x, y, l), lambda, &bl).unwrap();
                let ff = phase_delta_farfield(x, y, lambda, l, &bl).unwrap();
                ((exact - ff) / exact).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}

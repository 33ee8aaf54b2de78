//! Declarative scenario files (TOML).
//!
//! Physical quantities are strings with an explicit unit, `"292 nm"`,
//! `"8.611 ly"`, `"45 deg"`, converted to SI at parse time. The original text
//! is kept so a file serializes back to itself.

use crate::correlation::{wavelength_groups, DiscMethod, Evaluator, QuadratureSettings, Sweep, Variant};
use crate::error::{Error, Result};
use crate::estimation::{CenterSettings, SeparationSettings};
use crate::montecarlo::{ConversionMethod, ConversionSettings, Experiment, PairSampling, DEFAULT_BLOCK};
use crate::sources::{DiscSource, IntensitySample, PointSource, Position3, SampledSource, SourceModel};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

/// Meters per light year (Julian year).
pub const LIGHT_YEAR: f64 = 9.460_730_472_580_8e15;
/// Meters per parsec.
pub const PARSEC: f64 = 3.085_677_581_491_367e16;

/// Unit conversion: decimal prefixes are applied to the exponent so that
/// `"828 nm"` is exactly the double nearest 828e-9.
#[derive(Clone, Copy)]
enum Factor {
    Pow10(i32),
    Times(f64),
}

const LENGTH_UNITS: &[(&str, Factor)] = &[
    ("m", Factor::Pow10(0)),
    ("km", Factor::Pow10(3)),
    ("mm", Factor::Pow10(-3)),
    ("um", Factor::Pow10(-6)),
    ("µm", Factor::Pow10(-6)),
    ("nm", Factor::Pow10(-9)),
    ("ly", Factor::Times(LIGHT_YEAR)),
    ("pc", Factor::Times(PARSEC)),
];

const ANGLE_UNITS: &[(&str, Factor)] = &[
    ("rad", Factor::Pow10(0)),
    ("mrad", Factor::Pow10(-3)),
    ("deg", Factor::Times(std::f64::consts::PI / 180.0)),
];

fn parse_with_units(text: &str, units: &[(&str, Factor)], kind: &str) -> std::result::Result<f64, String> {
    let mut parts = text.split_whitespace();
    let (Some(num), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("{kind} `{text}` must be `<number> <unit>`"));
    };
    let not_number = || format!("{kind} `{text}`: `{num}` is not a number");
    let plain: f64 = num.parse().map_err(|_| not_number())?;
    if !plain.is_finite() {
        return Err(format!("{kind} `{text}` is not finite"));
    }
    let names: Vec<&str> = units.iter().map(|u| u.0).collect();
    let factor = units
        .iter()
        .find(|u| u.0 == unit)
        .ok_or_else(|| format!("unknown {kind} unit `{unit}` in `{text}` (expected one of {})", names.join(", ")))?
        .1;
    let v = match factor {
        Factor::Pow10(0) => plain,
        Factor::Pow10(p) => {
            let (mantissa, exp) = match num.find(['e', 'E']) {
                Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| not_number())?),
                None => (num, 0),
            };
            format!("{mantissa}e{}", exp + p).parse().map_err(|_| not_number())?
        }
        Factor::Times(f) => plain * f,
    };
    if !v.is_finite() {
        return Err(format!("{kind} `{text}` is out of range"));
    }
    Ok(v)
}

macro_rules! quantity {
    ($name:ident, $units:expr, $kind:literal, $si:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            value: f64,
            text: String,
        }

        impl $name {
            pub fn parse(text: &str) -> Result<Self> {
                let value = parse_with_units(text, $units, $kind).map_err(Error::Parse)?;
                Ok(Self {
                    value,
                    text: text.to_string(),
                })
            }

            /// A quantity in SI units.
            pub fn si(value: f64) -> Self {
                Self {
                    value,
                    text: format!("{value:?} {}", $si),
                }
            }

            pub fn value(&self) -> f64 {
                self.value
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.text)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.text)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                let value = parse_with_units(&text, $units, $kind).map_err(de::Error::custom)?;
                Ok(Self { value, text })
            }
        }
    };
}

quantity!(Length, LENGTH_UNITS, "length", "m");
quantity!(Angle, ANGLE_UNITS, "angle", "rad");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Default distance of every source from the detector plane.
    pub distance: Length,
    #[serde(rename = "source")]
    pub sources: Vec<SourceConfig>,
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub analytic: AnalyticConfig,
    #[serde(default)]
    pub conversion: ConversionConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Point,
    Disc,
    Sampled,
}

/// One `[[source]]` table. Points and discs need `center`, discs also
/// `radius`; sampled sources need `samples` and take `weight` as the total to
/// rescale to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[Length; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<Length>,
    pub wavelength: Length,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Overrides the scenario distance for this source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<Length>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<SampleConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub position: [Length; 2],
    pub intensity: f64,
    #[serde(default = "one")]
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub start: Length,
    pub stop: Length,
    pub samples: usize,
    #[serde(default = "zero_angle")]
    pub direction: Angle,
    /// Position of the fixed detector B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<[Length; 2]>,
}

/// Square grid of detector-A offsets for 2D maps (detector B at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: Length,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticConfig {
    /// Empty means every variant that applies to the source list.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            variants: Vec::new(),
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionConfig {
    #[serde(default)]
    pub method: ConversionMethod,
    #[serde(default = "quarter_turn")]
    pub theta: Angle,
    #[serde(default = "zero_angle")]
    pub phi: Angle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_wavelength: Option<Length>,
    /// `[A red, B red, A blue, B blue]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_phases: Option<[Angle; 4]>,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            method: ConversionMethod::None,
            theta: quarter_turn(),
            phi: zero_angle(),
            filter_wavelength: None,
            reference_phases: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub disc_method: DiscMethod,
    #[serde(default = "default_nodes")]
    pub radial: usize,
    #[serde(default = "default_nodes")]
    pub angular: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = QuadratureSettings::default();
        Self {
            disc_method: DiscMethod::ClosedForm,
            radial: q.radial,
            angular: q.angular,
            tolerance: q.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the sweep's sample count for Monte Carlo runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default)]
    pub extinction: f64,
    #[serde(default = "default_floor")]
    pub acceptance_floor: f64,
    #[serde(default)]
    pub pair_sampling: PairSampling,
    #[serde(default = "default_block")]
    pub block: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            samples: None,
            efficiency: 1.0,
            extinction: 0.0,
            acceptance_floor: default_floor(),
            pair_sampling: PairSampling::Weighted,
            block: DEFAULT_BLOCK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_snr")]
    pub snr_threshold_db: f64,
    #[serde(default = "default_padding")]
    pub padding: usize,
    #[serde(default = "default_center_padding")]
    pub center_padding: usize,
    /// Use the configured source centers to assign and orient 2D peaks.
    #[serde(default = "yes")]
    pub center_priors: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            snr_threshold_db: default_snr(),
            padding: default_padding(),
            center_padding: default_center_padding(),
            center_priors: true,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn zero_angle() -> Angle {
    Angle::parse("0 deg").unwrap()
}
fn quarter_turn() -> Angle {
    Angle::parse("45 deg").unwrap()
}
fn default_nodes() -> usize {
    QuadratureSettings::default().radial
}
fn default_tolerance() -> f64 {
    QuadratureSettings::default().tolerance
}
fn default_trials() -> u64 {
    100_000
}
fn default_floor() -> f64 {
    1e-3
}
fn default_block() -> u64 {
    DEFAULT_BLOCK
}
fn default_snr() -> f64 {
    SeparationSettings::default().snr_threshold_db
}
fn default_padding() -> usize {
    SeparationSettings::default().padding
}
fn default_center_padding() -> usize {
    CenterSettings::default().padding
}

fn kind_name(k: SourceKind) -> &'static str {
    match k {
        SourceKind::Point => "point",
        SourceKind::Disc => "disc",
        SourceKind::Sampled => "sampled",
    }
}

impl ScenarioConfig {
    /// Parse and validate. Errors name the offending field and, for syntax
    /// errors, the line.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            Error::Scenario(format!("field `{path}`: {}", inner.trim_end()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let sources = self.sources()?;
        if sources.is_empty() {
            return Err(Error::Scenario("at least one `[[source]]` is required".into()));
        }
        if let Some(i) = sources.iter().position(|s| !(s.total_intensity() > 0.0)) {
            return Err(Error::Scenario(format!("source[{i}] has zero intensity")));
        }
        self.sweep().validate().map_err(|e| Error::Scenario(format!("sweep: {e}")))?;
        if let Some(g) = &self.grid {
            if g.samples < 4 || !(g.half_width.value() > 0.0) {
                return Err(Error::Scenario("grid: need at least 4 samples and a positive half_width".into()));
            }
        }
        if !(self.analytic.scale > 0.0 && self.analytic.scale.is_finite()) {
            return Err(Error::Scenario("analytic.scale must be positive".into()));
        }
        let q = &self.quadrature;
        if q.radial == 0 || q.angular == 0 || !(q.tolerance > 0.0) {
            return Err(Error::Scenario("quadrature: node counts and tolerance must be positive".into()));
        }
        let mc = &self.montecarlo;
        if mc.trials == 0 {
            return Err(Error::Scenario("montecarlo.trials must be positive".into()));
        }
        if mc.block == 0 {
            return Err(Error::Scenario("montecarlo.block must be positive".into()));
        }
        if mc.samples.is_some_and(|n| n < 2) {
            return Err(Error::Scenario("montecarlo.samples must be at least 2".into()));
        }
        if !(mc.efficiency > 0.0 && mc.efficiency <= 1.0) {
            return Err(Error::Scenario("montecarlo.efficiency must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&mc.extinction) {
            return Err(Error::Scenario("montecarlo.extinction must be in [0, 1]".into()));
        }
        let est = &self.estimation;
        if est.padding == 0 || est.center_padding == 0 {
            return Err(Error::Scenario("estimation: padding must be positive".into()));
        }
        for v in &self.analytic.variants {
            self.check_variant(*v, &sources)?;
        }
        Ok(())
    }

    fn check_variant(&self, v: Variant, sources: &[SourceModel]) -> Result<()> {
        if v == Variant::Single && sources.len() != 1 {
            return Err(Error::Scenario(format!(
                "variant `single` needs exactly one source, the scenario has {}",
                sources.len()
            )));
        }
        Ok(())
    }

    pub fn sources(&self) -> Result<Vec<SourceModel>> {
        self.sources
            .iter()
            .enumerate()
            .map(|(i, s)| self.build_source(s).map_err(|e| Error::Scenario(format!("source[{i}]: {e}"))))
            .collect()
    }

    fn build_source(&self, s: &SourceConfig) -> Result<SourceModel> {
        let z = s.distance.as_ref().unwrap_or(&self.distance).value();
        let at = |c: &[Length; 2]| Position3::new(c[0].value(), c[1].value(), z);
        let wavelength = s.wavelength.value();
        let unexpected = |field: &'static str, present: bool| {
            if present {
                Err(Error::invalid(field, format!("not used by `{}` sources", kind_name(s.kind))))
            } else {
                Ok(())
            }
        };
        let center = || {
            s.center
                .as_ref()
                .ok_or_else(|| Error::invalid("center", "required for point and disc sources"))
        };
        Ok(match s.kind {
            SourceKind::Point => {
                unexpected("radius", s.radius.is_some())?;
                unexpected("samples", s.samples.is_some())?;
                PointSource::new(at(center()?)?, wavelength, s.weight.unwrap_or(1.0))?.into()
            }
            SourceKind::Disc => {
                unexpected("samples", s.samples.is_some())?;
                if !(z > 0.0) {
                    return Err(Error::invalid("distance", "discs must lie in front of the detectors"));
                }
                let radius = s.radius.as_ref().ok_or_else(|| Error::invalid("radius", "required for disc sources"))?;
                DiscSource::new(at(center()?)?, radius.value(), wavelength, s.weight.unwrap_or(1.0))?.into()
            }
            SourceKind::Sampled => {
                unexpected("center", s.center.is_some())?;
                unexpected("radius", s.radius.is_some())?;
                let samples = s
                    .samples
                    .as_ref()
                    .ok_or_else(|| Error::invalid("samples", "required for sampled sources"))?
                    .iter()
                    .map(|p| {
                        Ok(IntensitySample {
                            position: at(&p.position)?,
                            intensity: p.intensity,
                            area: p.area,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let src = SampledSource::weighted(samples, wavelength)?;
                match s.weight {
                    Some(w) => src.normalized(w)?.into(),
                    None => src.into(),
                }
            }
        })
    }

    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        Ok(self.sources()?.iter().map(|s| s.wavelength()).collect())
    }

    pub fn sweep(&self) -> Sweep {
        let s = &self.sweep;
        let reference = s
            .reference
            .as_ref()
            .map_or(Position3::origin(), |r| Position3 {
                x: r[0].value(),
                y: r[1].value(),
                z: 0.0,
            });
        let a = s.direction.value();
        Sweep {
            reference,
            direction: (a.cos(), a.sin()),
            start: s.start.value(),
            stop: s.stop.value(),
            samples: s.samples,
        }
    }

    pub fn evaluator(&self) -> Evaluator {
        let q = &self.quadrature;
        Evaluator::new(
            QuadratureSettings {
                radial: q.radial,
                angular: q.angular,
                tolerance: q.tolerance,
            },
            q.disc_method,
        )
    }

    /// Requested variants, or every applicable one: `single` for one source,
    /// otherwise `no-e2i2`, `e2i2` and `delta` (plus `multi` for three or more
    /// wavelength groups).
    pub fn variants(&self) -> Result<Vec<Variant>> {
        if !self.analytic.variants.is_empty() {
            return Ok(self.analytic.variants.clone());
        }
        let w = self.wavelengths()?;
        if w.len() == 1 {
            return Ok(vec![Variant::Single]);
        }
        let mut v = vec![Variant::NoE2i2, Variant::E2i2, Variant::Delta];
        if wavelength_groups(&w).iter().max().is_some_and(|&g| g >= 2) {
            v.push(Variant::Multi);
        }
        Ok(v)
    }

    pub fn conversion(&self) -> ConversionSettings {
        let c = &self.conversion;
        ConversionSettings {
            method: c.method,
            theta: c.theta.value(),
            phi: c.phi.value(),
            filter_wavelength: c.filter_wavelength.as_ref().map(Length::value),
            reference_phases: c
                .reference_phases
                .as_ref()
                .map_or([0.0; 4], |p| [p[0].value(), p[1].value(), p[2].value(), p[3].value()]),
        }
    }

    /// Monte Carlo experiment; `samples` in `[montecarlo]` overrides the
    /// sweep's sample count.
    pub fn experiment(&self) -> Result<Experiment> {
        let mut sweep = self.sweep();
        if let Some(n) = self.montecarlo.samples {
            sweep.samples = n;
        }
        let mc = &self.montecarlo;
        let mut exp = Experiment::new(self.sources()?, sweep, self.conversion());
        exp.efficiency = mc.efficiency;
        exp.extinction = mc.extinction;
        exp.acceptance_floor = mc.acceptance_floor;
        exp.pair_sampling = mc.pair_sampling;
        exp.scenario_hash = self.hash();
        Ok(exp)
    }

    /// Largest cross-wavelength oscillation frequency along the sweep,
    /// cycles per meter, from the configured centers.
    pub fn expected_frequency(&self) -> Result<Option<f64>> {
        let sources = self.sources()?;
        let w: Vec<f64> = sources.iter().map(|s| s.wavelength()).collect();
        let groups = wavelength_groups(&w);
        let (ux, uy) = self.sweep().direction;
        let mut best: Option<f64> = None;
        for p in 0..sources.len() {
            for q in p + 1..sources.len() {
                if groups[p] == groups[q] {
                    continue;
                }
                let (a, b) = (sources[p].center(), sources[q].center());
                let kx = a.x / (w[p] * a.z) - b.x / (w[q] * b.z);
                let ky = a.y / (w[p] * a.z) - b.y / (w[q] * b.z);
                let f = (kx * ux + ky * uy).abs();
                best = Some(best.map_or(f, |m| m.max(f)));
            }
        }
        Ok(best)
    }

    pub fn separation_settings(&self) -> Result<SeparationSettings> {
        Ok(SeparationSettings {
            snr_threshold_db: self.estimation.snr_threshold_db,
            padding: self.estimation.padding,
            expected_frequency: self.expected_frequency()?,
            distance: Some(self.distance.value()),
        })
    }

    pub fn center_settings(&self) -> Result<CenterSettings> {
        let priors = if self.estimation.center_priors {
            Some(self.sources()?.iter().map(|s| [s.center().x, s.center().y]).collect())
        } else {
            None
        };
        Ok(CenterSettings {
            padding: self.estimation.center_padding,
            distance: Some(self.distance.value()),
            priors,
        })
    }

    /// The two distinct wavelengths of a two-group scenario, shorter first.
    /// A single group gives its wavelength twice.
    pub fn wavelength_pair(&self) -> Result<(f64, f64)> {
        let w = self.wavelengths()?;
        let groups = wavelength_groups(&w);
        let mut reps: Vec<f64> = Vec::new();
        for g in 0..=groups.iter().copied().max().unwrap_or(0) {
            if let Some(i) = groups.iter().position(|&x| x == g) {
                reps.push(w[i]);
            }
        }
        match reps.as_slice() {
            [a] => Ok((*a, *a)),
            [a, b] => Ok((*a, *b)),
            _ => Err(Error::Scenario(format!(
                "separation needs exactly two wavelengths, the scenario has {}",
                reps.len()
            ))),
        }
    }
}

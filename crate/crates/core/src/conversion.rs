//! Photon states and the detection mechanisms that erase wavelength
//! which-path information.
//!
//! Three mechanisms are modelled:
//!
//! - single crystal: a frequency-conversion unitary on the `{λ1, λ2}`
//!   subspace followed by an ideal `λ2` filter at each detector;
//! - two crystals: both colours are converted to `λ3` into distinct spatial
//!   modes which are then projected onto their symmetric superposition;
//! - reference source: a four-fold coincidence with an entangled red/blue
//!   pair source.
//!
//! The pump is not expanded in the Fock basis. Adding or removing one pump
//! photon is taken to leave the coherent state unchanged; [`pump_fidelity`]
//! gives the overlap that this approximation ignores.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

/// Largest tolerated `|‖ψ‖² - 1|` for inputs that must be normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WavelengthMode {
    L1,
    L2,
    L3,
}

impl WavelengthMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WavelengthMode::L1 => "lambda1",
            WavelengthMode::L2 => "lambda2",
            WavelengthMode::L3 => "lambda3",
        }
    }
}

/// Spatial modes. `M3` is the superposition `(|1⟩ + |2⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpatialMode {
    M0,
    M1,
    M2,
    M3,
}

impl SpatialMode {
    pub fn index(&self) -> u8 {
        match self {
            SpatialMode::M0 => 0,
            SpatialMode::M1 => 1,
            SpatialMode::M2 => 2,
            SpatialMode::M3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel {
    pub wavelength: WavelengthMode,
    pub mode: SpatialMode,
}

impl BasisLabel {
    pub const fn new(wavelength: WavelengthMode, mode: SpatialMode) -> Self {
        Self { wavelength, mode }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.wavelength.as_str(), self.mode.index())
    }
}

/// Single-photon state over [`BasisLabel`]s.
///
/// A state produced by a projection with zero success probability is a
/// flagged null state with no amplitudes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhotonState {
    amplitudes: BTreeMap<BasisLabel, Complex64>,
    null: bool,
}

impl PhotonState {
    /// Builds a state from amplitudes without normalizing. Zero amplitudes are
    /// dropped; repeated labels add.
    pub fn from_amplitudes(amps: impl IntoIterator<Item = (BasisLabel, Complex64)>) -> Self {
        let mut amplitudes = BTreeMap::new();
        for (label, a) in amps {
            *amplitudes.entry(label).or_insert(Complex64::new(0.0, 0.0)) += a;
        }
        amplitudes.retain(|_, a| *a != Complex64::new(0.0, 0.0));
        Self {
            amplitudes,
            null: false,
        }
    }

    pub fn basis(wavelength: WavelengthMode, mode: SpatialMode) -> Self {
        Self::from_amplitudes([(BasisLabel::new(wavelength, mode), Complex64::new(1.0, 0.0))])
    }

    pub fn null() -> Self {
        Self {
            amplitudes: BTreeMap::new(),
            null: true,
        }
    }

    pub fn is_null(&self) -> bool {
        self.null
    }

    pub fn amplitude(&self, label: BasisLabel) -> Complex64 {
        self.amplitudes.get(&label).copied().unwrap_or_default()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (BasisLabel, Complex64)> + '_ {
        self.amplitudes.iter().map(|(l, a)| (*l, *a))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Rescaled to unit norm; a zero state becomes the null state.
    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr();
        if n == 0.0 {
            return Self::null();
        }
        let s = 1.0 / n.sqrt();
        Self {
            amplitudes: self.amplitudes.iter().map(|(l, a)| (*l, a * s)).collect(),
            null: false,
        }
    }

    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if self.null || (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized { norm_sqr: n });
        }
        Ok(())
    }

    /// One line per nonzero amplitude, sorted by label:
    /// `(lambda1,0): 0.7071067811865476+0i`.
    pub fn canonical_text(&self) -> String {
        if self.null {
            return "null\n".to_string();
        }
        let mut out = String::new();
        for (l, a) in &self.amplitudes {
            let sign = if a.im.is_sign_negative() { '-' } else { '+' };
            out.push_str(&format!("{l}: {}{sign}{}i\n", a.re, a.im.abs()));
        }
        out
    }
}

impl fmt::Display for PhotonState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// Frequency-conversion unitary on the `{λ1, λ2}` subspace:
///
/// ```text
/// |λ1⟩ →  cos θ |λ1⟩ + e^{iφ} sin θ |λ2⟩
/// |λ2⟩ → -e^{-iφ} sin θ |λ1⟩ + cos θ |λ2⟩
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionUnitary {
    pub theta: f64,
    pub phi: f64,
}

impl ConversionUnitary {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::invalid("theta/phi", "conversion angles must be finite"));
        }
        Ok(Self { theta, phi })
    }

    /// `m[row][col]`, columns are the images of `|λ1⟩` and `|λ2⟩`.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        let e = Complex64::from_polar(1.0, self.phi);
        [
            [Complex64::new(c, 0.0), -e.conj() * s],
            [e * s, Complex64::new(c, 0.0)],
        ]
    }

    /// `⟨to|U|from⟩`; `λ3` is left unchanged.
    pub fn amplitude(&self, to: WavelengthMode, from: WavelengthMode) -> Complex64 {
        let idx = |w: WavelengthMode| match w {
            WavelengthMode::L1 => Some(0),
            WavelengthMode::L2 => Some(1),
            WavelengthMode::L3 => None,
        };
        match (idx(to), idx(from)) {
            (Some(r), Some(c)) => self.matrix()[r][c],
            (None, None) => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Images of one basis state.
    fn image(&self, from: WavelengthMode) -> Vec<(WavelengthMode, Complex64)> {
        match from {
            WavelengthMode::L3 => vec![(WavelengthMode::L3, Complex64::new(1.0, 0.0))],
            _ => [WavelengthMode::L1, WavelengthMode::L2]
                .into_iter()
                .map(|to| (to, self.amplitude(to, from)))
                .collect(),
        }
    }
}

pub fn apply_conversion(state: &PhotonState, u: &ConversionUnitary) -> Result<PhotonState> {
    state.check_normalized()?;
    Ok(PhotonState::from_amplitudes(state.amplitudes().flat_map(|(l, a)| {
        u.image(l.wavelength)
            .into_iter()
            .map(move |(w, m)| (BasisLabel::new(w, l.mode), m * a))
    })))
}

/// Ideal wavelength filter. Returns the renormalized surviving state and the
/// success probability (the surviving norm² before renormalization).
pub fn filter_project(state: &PhotonState, keep: WavelengthMode) -> Result<(PhotonState, f64)> {
    state.check_normalized()?;
    let kept = PhotonState::from_amplitudes(state.amplitudes().filter(|(l, _)| l.wavelength == keep));
    let p = kept.norm_sqr();
    if p == 0.0 {
        return Ok((PhotonState::null(), 0.0));
    }
    Ok((kept.normalized(), p))
}

/// Conversion followed by a `λ2` filter: the single-crystal detector.
pub fn single_crystal_detect(state: &PhotonState, u: &ConversionUnitary) -> Result<(PhotonState, f64)> {
    filter_project(&apply_conversion(state, u)?, WavelengthMode::L2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentPump {
    pub mean_photons: f64,
    pub wavelength: f64,
    pub phase: f64,
}

impl CoherentPump {
    pub fn new(mean_photons: f64, wavelength: f64, phase: f64) -> Result<Self> {
        if !(mean_photons >= 0.0) {
            return Err(Error::invalid("mean_photons", format!("must be nonnegative, got {mean_photons}")));
        }
        if !(wavelength > 0.0) {
            return Err(Error::invalid("wavelength", format!("must be positive, got {wavelength}")));
        }
        Ok(Self {
            mean_photons,
            wavelength,
            phase,
        })
    }
}

/// Overlap norm² between the pump with one photon added or removed and the
/// original coherent state.
pub fn pump_fidelity(pump: &CoherentPump) -> f64 {
    1.0 - 1.0 / (1.0 + pump.mean_photons)
}

/// Propagation amplitudes `D_{1A}, D_{1B}, D_{2A}, D_{2B}` from sources 1 and 2
/// to detectors A and B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSet {
    pub d1a: Complex64,
    pub d1b: Complex64,
    pub d2a: Complex64,
    pub d2b: Complex64,
}

impl AmplitudeSet {
    pub fn new(d1a: Complex64, d1b: Complex64, d2a: Complex64, d2b: Complex64) -> Result<Self> {
        for (name, d) in [("d1a", d1a), ("d1b", d1b), ("d2a", d2a), ("d2b", d2b)] {
            if !(d.re.is_finite() && d.im.is_finite()) {
                return Err(Error::invalid(name, "amplitude must be finite"));
            }
            if d.norm() > 1.0 + 1e-12 {
                return Err(Error::invalid(name, format!("|D| = {} exceeds 1", d.norm())));
            }
        }
        Ok(Self { d1a, d1b, d2a, d2b })
    }

    /// Magnitudes `1/√2` with the given phases.
    pub fn from_phases(phi1a: f64, phi1b: f64, phi2a: f64, phi2b: f64) -> Self {
        let d = |p: f64| Complex64::from_polar(FRAC_1_SQRT_2, p);
        Self {
            d1a: d(phi1a),
            d1b: d(phi1b),
            d2a: d(phi2a),
            d2b: d(phi2b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbtMode {
    /// Different wavelengths, no conversion: the two paths do not interfere.
    Distinguishable,
    /// After which-wavelength information is erased.
    E2i2,
}

pub fn hbt_coincidence(amps: &AmplitudeSet, mode: HbtMode) -> f64 {
    let p = amps.d1a * amps.d2b;
    let q = amps.d2a * amps.d1b;
    let incoherent = p.norm_sqr() + q.norm_sqr();
    match mode {
        HbtMode::Distinguishable => incoherent,
        HbtMode::E2i2 => incoherent + 2.0 * (p * q.conj()).re,
    }
}

/// Two photons, one at each detector, as amplitudes over
/// `(label at A, label at B)`. The state is not normalized: its norm² is the
/// probability of the history it describes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwoPhotonState {
    amplitudes: BTreeMap<(BasisLabel, BasisLabel), Complex64>,
}

impl TwoPhotonState {
    /// `D_{1A}D_{2B}|λ1⟩_A|λ2⟩_B + D_{2A}D_{1B}|λ2⟩_A|λ1⟩_B`, spatial mode 0.
    pub fn from_paths(amps: &AmplitudeSet) -> Self {
        let l1 = BasisLabel::new(WavelengthMode::L1, SpatialMode::M0);
        let l2 = BasisLabel::new(WavelengthMode::L2, SpatialMode::M0);
        let mut s = Self::default();
        s.add((l1, l2), amps.d1a * amps.d2b);
        s.add((l2, l1), amps.d2a * amps.d1b);
        s
    }

    fn add(&mut self, key: (BasisLabel, BasisLabel), a: Complex64) {
        *self.amplitudes.entry(key).or_insert(Complex64::new(0.0, 0.0)) += a;
    }

    pub fn amplitude(&self, a: BasisLabel, b: BasisLabel) -> Complex64 {
        self.amplitudes.get(&(a, b)).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// `(U_A ⊗ U_B)|ψ⟩`.
    pub fn convert(&self, ua: &ConversionUnitary, ub: &ConversionUnitary) -> Self {
        let mut out = Self::default();
        for (&(la, lb), &amp) in &self.amplitudes {
            for (wa, ma) in ua.image(la.wavelength) {
                for (wb, mb) in ub.image(lb.wavelength) {
                    out.add((BasisLabel::new(wa, la.mode), BasisLabel::new(wb, lb.mode)), amp * ma * mb);
                }
            }
        }
        out
    }

    /// Filters at both detectors. The result keeps its norm², which is the
    /// probability of both photons passing.
    pub fn filter(&self, keep_a: WavelengthMode, keep_b: WavelengthMode) -> Self {
        Self {
            amplitudes: self
                .amplitudes
                .iter()
                .filter(|((a, b), _)| a.wavelength == keep_a && b.wavelength == keep_b)
                .map(|(k, v)| (*k, *v))
                .collect(),
        }
    }
}

/// Post-selected coincidence probability of the single-crystal method:
/// convert at both detectors, keep only `λ2` at both.
pub fn single_crystal_coincidence(amps: &AmplitudeSet, ua: &ConversionUnitary, ub: &ConversionUnitary) -> f64 {
    TwoPhotonState::from_paths(amps)
        .convert(ua, ub)
        .filter(WavelengthMode::L2, WavelengthMode::L2)
        .norm_sqr()
}

/// Two-crystal method. `(λ1, 0) → (λ3, 1)` and `(λ2, 0) → (λ3, 2)`, then the
/// spatial part is projected onto `|3⟩ = (|1⟩ + |2⟩)/√2`.
pub fn two_crystal_evolve(input: &PhotonState) -> Result<(PhotonState, f64)> {
    input.check_normalized()?;
    let l1 = BasisLabel::new(WavelengthMode::L1, SpatialMode::M0);
    let l2 = BasisLabel::new(WavelengthMode::L2, SpatialMode::M0);
    if input.amplitudes().any(|(l, _)| l != l1 && l != l2) {
        return Err(Error::UnsupportedState {
            expected: "{(lambda1,0), (lambda2,0)}",
        });
    }
    let converted = PhotonState::from_amplitudes([
        (BasisLabel::new(WavelengthMode::L3, SpatialMode::M1), input.amplitude(l1)),
        (BasisLabel::new(WavelengthMode::L3, SpatialMode::M2), input.amplitude(l2)),
    ]);
    let overlap = FRAC_1_SQRT_2
        * (converted.amplitude(BasisLabel::new(WavelengthMode::L3, SpatialMode::M1))
            + converted.amplitude(BasisLabel::new(WavelengthMode::L3, SpatialMode::M2)));
    let p = overlap.norm_sqr();
    if p == 0.0 {
        return Ok((PhotonState::null(), 0.0));
    }
    let out = PhotonState::from_amplitudes([(BasisLabel::new(WavelengthMode::L3, SpatialMode::M3), overlap / p.sqrt())]);
    Ok((out, p))
}

/// Path phases for the reference-source method. All propagators have
/// magnitude `1/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferencePhases {
    pub phi1a: f64,
    pub phi1b: f64,
    pub phi2a: f64,
    pub phi2b: f64,
    pub phi3a_red: f64,
    pub phi3b_red: f64,
    pub phi3a_blue: f64,
    pub phi3b_blue: f64,
}

impl ReferencePhases {
    pub fn from_array(p: [f64; 8]) -> Self {
        Self {
            phi1a: p[0],
            phi1b: p[1],
            phi2a: p[2],
            phi2b: p[3],
            phi3a_red: p[4],
            phi3b_red: p[5],
            phi3a_blue: p[6],
            phi3b_blue: p[7],
        }
    }

    /// Phase difference between the two post-selected histories.
    pub fn combination(&self) -> f64 {
        self.phi1a - self.phi1b - self.phi2a + self.phi2b + self.phi3a_red - self.phi3b_red - self.phi3a_blue + self.phi3b_blue
    }
}

/// Probability of the four-fold coincidence with one red and one blue photon
/// at each detector,
/// `|D_{1A}D_{2B}D^red_{3A}D^blue_{3B} + D_{1B}D_{2A}D^red_{3B}D^blue_{3A}|²`.
pub fn reference_fourfold(phases: &ReferencePhases) -> f64 {
    0.125 + 0.125 * crate::phase::reduce(phases.combination()).cos()
}

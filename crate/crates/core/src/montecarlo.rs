//! Photon-pair Monte Carlo with coincidence counting.
//!
//! Each trial emits two photons. Each photon comes from a source chosen with
//! probability proportional to its weight, from a point drawn uniformly over
//! the source, and with a uniform random phase. Each photon reaches either
//! detector with amplitude `1/√2` times its propagation phase. The detector
//! devices (conversion, filter or post-selection) map each photon to a set
//! of detected outcomes with amplitudes `t(outcome, source)`. The joint
//! detection probability sums the two assignment paths coherently within
//! each pair of outcomes:
//!
//! ```text
//! p = Σ_{oA,oB} |t_A(oA,1) t_B(oB,2) D_1A D_2B + t_A(oA,2) t_B(oB,1) D_2A D_1B|²
//! ```
//!
//! and the single-detector probability is `q_X = ½ Σ_i Σ_o |t_X(o,i)|²`.
//! Outcomes are sampled with three uniforms so that a coincidence is always
//! also a click at both detectors (`p ≤ q_A q_B` by Cauchy–Schwarz).
//!
//! Random numbers come from ChaCha8 with the baseline index as stream and
//! the word position fixed by the trial index, so any split of the trials
//! into blocks produces the same tallies.

use crate::conversion::{ConversionUnitary, WavelengthMode};
use crate::correlation::{exact_regime, wavelength_groups, CorrelationCurve, CurvePoint, Normalization, Sweep, Variant};
use crate::error::{Error, Result};
use crate::phase;
use crate::sources::{farfield_unchecked, phase_delta_exact, Baseline, Position3, SourceModel};
use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

pub const TALLY_HEADER: &str = "separation_m,coincidences,singles_a,singles_b,trials";

/// Trials per work item.
pub const DEFAULT_BLOCK: u64 = 1 << 16;

/// Random words consumed per trial.
const WORDS_PER_TRIAL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionMethod {
    /// Plain detectors: photons of different wavelengths are distinguishable.
    #[default]
    None,
    SingleCrystal,
    TwoCrystal,
    Reference,
}

impl ConversionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConversionMethod::None => "none",
            ConversionMethod::SingleCrystal => "single-crystal",
            ConversionMethod::TwoCrystal => "two-crystal",
            ConversionMethod::Reference => "reference",
        }
    }
}

impl fmt::Display for ConversionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConversionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConversionMethod::None),
            "single-crystal" => Ok(ConversionMethod::SingleCrystal),
            "two-crystal" => Ok(ConversionMethod::TwoCrystal),
            "reference" => Ok(ConversionMethod::Reference),
            other => Err(Error::Parse(format!(
                "unknown conversion method `{other}` (expected none, single-crystal, two-crystal or reference)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionSettings {
    pub method: ConversionMethod,
    pub theta: f64,
    pub phi: f64,
    /// Passband of the single-crystal filter; defaults to the shortest
    /// source wavelength.
    pub filter_wavelength: Option<f64>,
    /// Reference-source phases `[A red, B red, A blue, B blue]`.
    pub reference_phases: [f64; 4],
}

impl Default for ConversionSettings {
    fn default() -> Self {
        Self {
            method: ConversionMethod::None,
            theta: std::f64::consts::FRAC_PI_4,
            phi: 0.0,
            filter_wavelength: None,
            reference_phases: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSampling {
    /// Both photons drawn independently with probability ∝ source weight.
    #[default]
    Weighted,
    /// Exactly one photon from each of two sources.
    OnePerSource,
}

/// Everything a run needs besides the trial count and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub sources: Vec<SourceModel>,
    pub sweep: Sweep,
    pub conversion: ConversionSettings,
    /// Detection efficiency per detector, in (0, 1].
    pub efficiency: f64,
    /// Filter leakage probability for the rejected wavelength.
    pub extinction: f64,
    /// Acceptance below this triggers a statistics warning.
    pub acceptance_floor: f64,
    pub pair_sampling: PairSampling,
    pub scenario_hash: String,
}

impl Experiment {
    pub fn new(sources: Vec<SourceModel>, sweep: Sweep, conversion: ConversionSettings) -> Self {
        Self {
            sources,
            sweep,
            conversion,
            efficiency: 1.0,
            extinction: 0.0,
            acceptance_floor: 1e-3,
            pair_sampling: PairSampling::Weighted,
            scenario_hash: String::new(),
        }
    }
}

/// One sampled photon emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub source: usize,
    pub position: Position3,
    pub phase: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTally {
    pub separations: Vec<f64>,
    pub coincidences: Vec<u64>,
    pub singles_a: Vec<u64>,
    pub singles_b: Vec<u64>,
    /// Trials per baseline.
    pub trials: u64,
    pub seed: u64,
    pub scenario_hash: String,
    pub method: ConversionMethod,
    pub variant: Variant,
    /// Analytic plateau the normalized curve tends to.
    pub plateau: f64,
    /// Normalization constant applied by [`histogram_to_curve`].
    pub kappa: f64,
}

impl CoincidenceTally {
    /// Fraction of detector-trials that passed conversion, filtering and
    /// post-selection, per detector.
    pub fn acceptance(&self) -> (f64, f64) {
        let n = self.trials as f64 * self.separations.len() as f64;
        let sa: u64 = self.singles_a.iter().sum();
        let sb: u64 = self.singles_b.iter().sum();
        (sa as f64 / n, sb as f64 / n)
    }

    /// Coincidences per trial, raw and divided by the product of the
    /// per-detector acceptances.
    pub fn coincidence_rates(&self) -> (f64, f64) {
        let n = self.trials as f64 * self.separations.len() as f64;
        let raw = self.coincidences.iter().sum::<u64>() as f64 / n;
        let (a, b) = self.acceptance();
        let corrected = if a > 0.0 && b > 0.0 { raw / (a * b) } else { f64::NAN };
        (raw, corrected)
    }

    pub fn metadata_line(&self) -> String {
        format!(
            "# seed={} scenario={} method={} variant={} trials={} plateau={} kappa={}",
            self.seed, self.scenario_hash, self.method, self.variant, self.trials, self.plateau, self.kappa
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.metadata_line();
        out.push('\n');
        out.push_str(TALLY_HEADER);
        out.push('\n');
        for i in 0..self.separations.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.separations[i], self.coincidences[i], self.singles_a[i], self.singles_b[i], self.trials
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| Error::Parse("empty tally file".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("tally must start with a `#` metadata line".into()))?;
        let mut tally = CoincidenceTally {
            separations: vec![],
            coincidences: vec![],
            singles_a: vec![],
            singles_b: vec![],
            trials: 0,
            seed: 0,
            scenario_hash: String::new(),
            method: ConversionMethod::None,
            variant: Variant::Single,
            plateau: 1.0,
            kappa: 1.0,
        };
        let bad = |k: &str, v: &str| Error::Parse(format!("tally metadata `{k}` has invalid value `{v}`"));
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad metadata entry `{kv}`")))?;
            match k {
                "seed" => tally.seed = v.parse().map_err(|_| bad(k, v))?,
                "scenario" => tally.scenario_hash = v.to_string(),
                "method" => tally.method = v.parse()?,
                "variant" => tally.variant = v.parse()?,
                "trials" => tally.trials = v.parse().map_err(|_| bad(k, v))?,
                "plateau" => tally.plateau = v.parse().map_err(|_| bad(k, v))?,
                "kappa" => tally.kappa = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(Error::Parse(format!("unknown metadata key `{k}`"))),
            }
        }
        if lines.next() != Some(TALLY_HEADER) {
            return Err(Error::Parse(format!("expected header `{TALLY_HEADER}`")));
        }
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("tally line {}: expected 5 fields", n + 3)));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| Error::Parse(format!("tally line {}: bad count `{s}`", n + 3)));
            tally
                .separations
                .push(f[0].parse().map_err(|_| Error::Parse(format!("tally line {}: bad separation", n + 3)))?);
            tally.coincidences.push(num(f[1])?);
            tally.singles_a.push(num(f[2])?);
            tally.singles_b.push(num(f[3])?);
            if num(f[4])? != tally.trials {
                return Err(Error::Parse(format!("tally line {}: trials disagree with metadata", n + 3)));
            }
        }
        Ok(tally)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub tally: CoincidenceTally,
    pub warnings: Vec<String>,
}

/// Per-source detector response: amplitudes for up to two detected outcomes.
#[derive(Debug, Clone, Copy)]
struct Response {
    a: [Complex64; 2],
    b: [Complex64; 2],
    group: usize,
}

#[derive(Debug, Clone)]
struct Model {
    method: ConversionMethod,
    responses: Vec<Response>,
    cumulative: Vec<f64>,
    efficiency: f64,
    pairing: PairSampling,
}

fn unit_uniform(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl Model {
    fn new(exp: &Experiment) -> Result<Self> {
        let n = exp.sources.len();
        if n == 0 {
            return Err(Error::Scenario("at least one source is required".into()));
        }
        if exp.sources.iter().any(|s| !(s.total_intensity() > 0.0)) {
            return Err(Error::Scenario("every source needs a positive intensity".into()));
        }
        if !(exp.efficiency > 0.0 && exp.efficiency <= 1.0) {
            return Err(Error::invalid("efficiency", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&exp.extinction) {
            return Err(Error::invalid("extinction", "must lie in [0, 1]"));
        }
        if exp.pair_sampling == PairSampling::OnePerSource && n != 2 {
            return Err(Error::Scenario("one-per-source pairing needs exactly two sources".into()));
        }
        let wavelengths: Vec<f64> = exp.sources.iter().map(|s| s.wavelength()).collect();
        let groups = wavelength_groups(&wavelengths);
        let n_groups = groups.iter().max().map_or(0, |g| g + 1);
        let c = &exp.conversion;
        let zero = Complex64::new(0.0, 0.0);
        let responses = match c.method {
            ConversionMethod::None => groups
                .iter()
                .map(|&g| Response {
                    a: [Complex64::new(1.0, 0.0), zero],
                    b: [Complex64::new(1.0, 0.0), zero],
                    group: g,
                })
                .collect(),
            ConversionMethod::SingleCrystal => {
                if n_groups > 2 {
                    return Err(Error::Scenario(format!("single-crystal conversion handles two wavelengths, got {n_groups}")));
                }
                let keep = match c.filter_wavelength {
                    Some(w) => groups
                        .iter()
                        .zip(&wavelengths)
                        .find(|(_, &l)| (l - w).abs() <= 1e-9 * l.max(w))
                        .map(|(&g, _)| g)
                        .ok_or_else(|| Error::Scenario(format!("filter wavelength {w} m matches no source")))?,
                    None => 0,
                };
                let u = ConversionUnitary::new(c.theta, c.phi)?;
                let leak = exp.extinction.sqrt();
                groups
                    .iter()
                    .map(|&g| {
                        let from = if g == keep { WavelengthMode::L2 } else { WavelengthMode::L1 };
                        let t = [leak * u.amplitude(WavelengthMode::L1, from), u.amplitude(WavelengthMode::L2, from)];
                        Response { a: t, b: t, group: g }
                    })
                    .collect()
            }
            ConversionMethod::TwoCrystal => groups
                .iter()
                .map(|&g| {
                    let t = [Complex64::new(FRAC_1_SQRT_2, 0.0), zero];
                    Response { a: t, b: t, group: g }
                })
                .collect(),
            ConversionMethod::Reference => {
                if n_groups > 2 {
                    return Err(Error::Scenario(format!("the reference method handles two wavelengths, got {n_groups}")));
                }
                let [ar, br, ab, bb] = c.reference_phases;
                let r = |p: f64| Complex64::from_polar(FRAC_1_SQRT_2, p);
                groups
                    .iter()
                    .map(|&g| {
                        // the longer wavelength is red
                        let red = n_groups == 1 || g == 1;
                        let (a, b) = if red { (r(ar), r(br)) } else { (r(ab), r(bb)) };
                        Response {
                            a: [a, zero],
                            b: [b, zero],
                            group: g,
                        }
                    })
                    .collect()
            }
        };
        let total: f64 = exp.sources.iter().map(|s| s.total_intensity()).sum();
        let mut acc = 0.0;
        let cumulative = exp
            .sources
            .iter()
            .map(|s| {
                acc += s.total_intensity() / total;
                acc
            })
            .collect();
        Ok(Self {
            method: c.method,
            responses,
            cumulative,
            efficiency: exp.efficiency,
            pairing: exp.pair_sampling,
        })
    }

    fn pick(&self, u: f64) -> usize {
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }

    fn pair_probability(&self) -> Vec<((usize, usize), f64)> {
        match self.pairing {
            PairSampling::OnePerSource => vec![((0, 1), 1.0)],
            PairSampling::Weighted => {
                let mut prev = 0.0;
                let w: Vec<f64> = self
                    .cumulative
                    .iter()
                    .map(|&c| {
                        let p = c - prev;
                        prev = c;
                        p
                    })
                    .collect();
                let mut out = vec![];
                for i in 0..w.len() {
                    for j in 0..w.len() {
                        out.push(((i, j), w[i] * w[j]));
                    }
                }
                out
            }
        }
    }

    fn singles(&self, i: usize, j: usize) -> (f64, f64) {
        if self.method == ConversionMethod::None {
            return (self.efficiency, self.efficiency);
        }
        let s = |t: &[Complex64; 2]| t.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let (ri, rj) = (&self.responses[i], &self.responses[j]);
        (
            0.5 * (s(&ri.a) + s(&rj.a)) * self.efficiency,
            0.5 * (s(&ri.b) + s(&rj.b)) * self.efficiency,
        )
    }

    /// Joint detection probability for photons from sources `i` and `j` with
    /// path products `x = D_iA D_jB` and `y = D_jA D_iB`.
    fn joint(&self, i: usize, j: usize, x: Complex64, y: Complex64, coherent: bool) -> f64 {
        let (ri, rj) = (&self.responses[i], &self.responses[j]);
        let same = ri.group == rj.group;
        let p = match self.method {
            ConversionMethod::None => {
                if same && coherent {
                    (x + y).norm_sqr()
                } else {
                    x.norm_sqr() + y.norm_sqr()
                }
            }
            ConversionMethod::Reference if same => 0.0,
            _ => {
                let mut p = 0.0;
                for oa in 0..2 {
                    for ob in 0..2 {
                        let u = ri.a[oa] * rj.b[ob] * x;
                        let v = rj.a[oa] * ri.b[ob] * y;
                        p += if coherent { (u + v).norm_sqr() } else { u.norm_sqr() + v.norm_sqr() };
                    }
                }
                p
            }
        };
        p * self.efficiency * self.efficiency
    }

    /// `(E[q_A], E[q_B], E[p])` with the path interference removed.
    fn plateau_expectations(&self) -> (f64, f64, f64) {
        let half = Complex64::new(0.5, 0.0);
        let mut out = (0.0, 0.0, 0.0);
        for ((i, j), w) in self.pair_probability() {
            let (qa, qb) = self.singles(i, j);
            out.0 += w * qa;
            out.1 += w * qb;
            out.2 += w * self.joint(i, j, half, half, false);
        }
        out
    }
}

/// Per-baseline, per-source propagation phase evaluator.
#[derive(Debug, Clone)]
enum PathPhase {
    Exact(f64),
    FarField(f64),
}

fn path_phases(sources: &[SourceModel], bl: &Baseline) -> Result<Vec<PathPhase>> {
    sources
        .iter()
        .map(|s| {
            let wl = s.wavelength();
            match s {
                SourceModel::Disc(d) => Ok(PathPhase::FarField(TAU / (wl * d.distance()))),
                SourceModel::Point(p) if exact_regime(std::iter::once(p.center), wl, bl) => Ok(PathPhase::Exact(wl)),
                SourceModel::Sampled(sm) if exact_regime(sm.samples.iter().map(|x| x.position), wl, bl) => {
                    Ok(PathPhase::Exact(wl))
                }
                _ => {
                    let z = s.center().z;
                    if !(z > 0.0) {
                        return Err(Error::Scenario("far-field source needs z > 0".into()));
                    }
                    Ok(PathPhase::FarField(TAU / (wl * z)))
                }
            }
        })
        .collect()
}

fn delta_phi(p: &PathPhase, r: &Position3, bl: &Baseline) -> f64 {
    match p {
        PathPhase::Exact(wl) => phase_delta_exact(r, *wl, bl).unwrap_or(f64::NAN),
        PathPhase::FarField(k) => farfield_unchecked(r.x, r.y, *k, bl),
    }
}

/// Draw an emission point from a source with density ∝ I(r).
fn emit(src: &SourceModel, u1: f64, u2: f64) -> Position3 {
    match src {
        SourceModel::Point(p) => p.center,
        SourceModel::Disc(d) => {
            let r = d.radius * u1.sqrt();
            let (s, c) = (TAU * u2).sin_cos();
            Position3 {
                x: d.center.x + r * c,
                y: d.center.y + r * s,
                z: d.center.z,
            }
        }
        SourceModel::Sampled(sm) => {
            let total = sm.total();
            let mut acc = 0.0;
            for x in &sm.samples {
                acc += x.intensity * x.area / total;
                if u1 < acc {
                    return x.position;
                }
            }
            sm.samples.last().map(|x| x.position).unwrap_or(Position3::origin())
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    coincidences: u64,
    singles_a: u64,
    singles_b: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            coincidences: self.coincidences + o.coincidences,
            singles_a: self.singles_a + o.singles_a,
            singles_b: self.singles_b + o.singles_b,
        }
    }
}

struct Trial {
    events: [EmissionEvent; 2],
    ua: f64,
    ub: f64,
    uc: f64,
}

fn draw(model: &Model, sources: &[SourceModel], words: &[u64; WORDS_PER_TRIAL]) -> Trial {
    let photon = |k: usize, w: &[u64]| {
        let idx = match model.pairing {
            PairSampling::Weighted => model.pick(unit_uniform(w[0])),
            PairSampling::OnePerSource => k,
        };
        EmissionEvent {
            source: idx,
            position: emit(&sources[idx], unit_uniform(w[1]), unit_uniform(w[2])),
            phase: TAU * unit_uniform(w[3]),
            wavelength: sources[idx].wavelength(),
        }
    };
    Trial {
        events: [photon(0, &words[0..4]), photon(1, &words[4..8])],
        ua: unit_uniform(words[8]),
        ub: unit_uniform(words[9]),
        uc: unit_uniform(words[10]),
    }
}

/// Joint and single probabilities for one trial at one baseline.
fn probabilities(model: &Model, phases: &[PathPhase], bl: &Baseline, t: &Trial) -> (f64, f64, f64) {
    let [e1, e2] = &t.events;
    let d1 = delta_phi(&phases[e1.source], &e1.position, bl);
    let d2 = delta_phi(&phases[e2.source], &e2.position, bl);
    let amp = |random: f64, half: f64| phase::cis(random + half) * FRAC_1_SQRT_2;
    let (d1a, d1b) = (amp(e1.phase, 0.5 * d1), amp(e1.phase, -0.5 * d1));
    let (d2a, d2b) = (amp(e2.phase, 0.5 * d2), amp(e2.phase, -0.5 * d2));
    let p = model.joint(e1.source, e2.source, d1a * d2b, d2a * d1b, true);
    let (qa, qb) = model.singles(e1.source, e2.source);
    (p, qa, qb)
}

#[allow(clippy::too_many_arguments)]
fn run_block(model: &Model, exp: &Experiment, phases: &[PathPhase], bl: &Baseline, seed: u64, stream: u64, start: u64, end: u64) -> Counts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(start as u128 * 2 * WORDS_PER_TRIAL as u128);
    let mut words = [0u64; WORDS_PER_TRIAL];
    let mut c = Counts::default();
    for _ in start..end {
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        let t = draw(model, &exp.sources, &words);
        let (p, qa, qb) = probabilities(model, phases, bl, &t);
        debug_assert!((0.0..=1.0 + 1e-12).contains(&p), "p = {p}");
        debug_assert!(p <= qa * qb * (1.0 + 1e-12) + 1e-300, "p = {p}, qa qb = {}", qa * qb);
        let a = t.ua < qa;
        let b = t.ub < qb;
        c.singles_a += a as u64;
        c.singles_b += b as u64;
        if a && b && t.uc * qa * qb < p {
            c.coincidences += 1;
        }
    }
    c
}

/// Analytic plateau and the constant that maps `C N / (S_A S_B)` onto it.
fn normalization_constants(model: &Model, exp: &Experiment) -> Result<(f64, f64)> {
    let w: f64 = exp.sources.iter().map(|s| s.total_intensity()).sum();
    let plateau = w * w;
    let (qa, qb, p) = model.plateau_expectations();
    if !(p > 0.0) {
        return Err(Error::Scenario(
            "this source and detector configuration can never produce a coincidence".into(),
        ));
    }
    Ok((plateau, plateau * qa * qb / p))
}

fn variant_for(exp: &Experiment) -> Variant {
    let wl: Vec<f64> = exp.sources.iter().map(|s| s.wavelength()).collect();
    let groups = wavelength_groups(&wl).into_iter().max().unwrap_or(0) + 1;
    match (exp.sources.len(), exp.conversion.method, groups) {
        (1, _, _) => Variant::Single,
        (_, _, 1) => Variant::NoE2i2,
        (_, ConversionMethod::None, _) => Variant::NoE2i2,
        _ => Variant::E2i2,
    }
}

pub fn run_trials(exp: &Experiment, n_trials: u64, seed: u64) -> Result<RunResult> {
    run_trials_blocked(exp, n_trials, seed, DEFAULT_BLOCK)
}

/// As [`run_trials`] with an explicit block size; the result does not
/// depend on it.
pub fn run_trials_blocked(exp: &Experiment, n_trials: u64, seed: u64, block: u64) -> Result<RunResult> {
    if n_trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if block == 0 {
        return Err(Error::invalid("block", "must be at least 1"));
    }
    exp.sweep.validate()?;
    let model = Model::new(exp)?;
    let (plateau, kappa) = normalization_constants(&model, exp)?;
    let separations = exp.sweep.separations();
    let baselines: Vec<Baseline> = separations.iter().map(|&s| exp.sweep.baseline(s)).collect();
    let phases = baselines
        .iter()
        .map(|bl| path_phases(&exp.sources, bl))
        .collect::<Result<Vec<_>>>()?;

    let blocks_per_baseline = n_trials.div_ceil(block);
    let work: Vec<(usize, u64)> = (0..baselines.len())
        .flat_map(|b| (0..blocks_per_baseline).map(move |k| (b, k)))
        .collect();
    let counts: Vec<Counts> = work
        .par_iter()
        .map(|&(b, k)| {
            let start = k * block;
            let end = (start + block).min(n_trials);
            run_block(&model, exp, &phases[b], &baselines[b], seed, b as u64, start, end)
        })
        .collect();
    let mut per_baseline = vec![Counts::default(); baselines.len()];
    for (&(b, _), c) in work.iter().zip(counts) {
        per_baseline[b] = per_baseline[b] + c;
    }

    let tally = CoincidenceTally {
        separations,
        coincidences: per_baseline.iter().map(|c| c.coincidences).collect(),
        singles_a: per_baseline.iter().map(|c| c.singles_a).collect(),
        singles_b: per_baseline.iter().map(|c| c.singles_b).collect(),
        trials: n_trials,
        seed,
        scenario_hash: exp.scenario_hash.clone(),
        method: exp.conversion.method,
        variant: variant_for(exp),
        plateau,
        kappa,
    };
    let mut warnings = vec![];
    let (aa, ab) = tally.acceptance();
    if aa.min(ab) < exp.acceptance_floor {
        warnings.push(format!(
            "post-selection acceptance {:.3e} is below the floor {:.3e}; statistics will be poor",
            aa.min(ab),
            exp.acceptance_floor
        ));
    }
    Ok(RunResult { tally, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCurve {
    pub curve: CorrelationCurve,
    /// Baselines with no coincidences or no singles; they are left out of
    /// the curve.
    pub empty_bins: Vec<f64>,
}

/// `G = κ C N / (S_A S_B)` per baseline with a binomial standard error.
///
/// With coupled sampling the counts are correlated, and to first order
/// `Var(ln G) = (1-p)/(Np) - (1-q_A)/(N q_A) - (1-q_B)/(N q_B)`.
pub fn histogram_to_curve(tally: &CoincidenceTally) -> Result<McCurve> {
    let n = tally.trials as f64;
    let mut points = vec![];
    let mut empty_bins = vec![];
    for i in 0..tally.separations.len() {
        let (c, sa, sb) = (tally.coincidences[i], tally.singles_a[i], tally.singles_b[i]);
        if c == 0 || sa == 0 || sb == 0 {
            empty_bins.push(tally.separations[i]);
            continue;
        }
        let p = c as f64 / n;
        let qa = sa as f64 / n;
        let qb = sb as f64 / n;
        let g = tally.kappa * p / (qa * qb);
        let var = ((1.0 - p) / (n * p) - (1.0 - qa) / (n * qa) - (1.0 - qb) / (n * qb)).max(0.0);
        points.push(CurvePoint {
            separation: tally.separations[i],
            value: g,
            error: Some(g * var.sqrt()),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyCurve(format!(
            "no baseline recorded a coincidence ({} bins flagged)",
            empty_bins.len()
        )));
    }
    let curve = CorrelationCurve::new(
        points,
        tally.variant,
        Normalization {
            plateau: tally.plateau,
            scale: 1.0,
        },
    )?;
    Ok(McCurve { curve, empty_bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::Evaluator;
    use crate::sources::{DiscSource, PointSource};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    const LY: f64 = 9.460_730_472_580_8e15;

    fn pos(x: f64, y: f64, z: f64) -> Position3 {
        Position3::new(x, y, z).unwrap()
    }

    fn disc(x: f64, wl: f64) -> SourceModel {
        DiscSource::new(pos(x, 0.0, 8.611 * LY), 2e9, wl, 1.0).unwrap().into()
    }

    fn single_disc() -> Experiment {
        Experiment::new(vec![disc(0.0, 292e-9)], Sweep::along_x(0.0, 20.0, 11), ConversionSettings::default())
    }

    #[test]
    fn same_seed_same_tally_and_block_independence() {
        let exp = single_disc();
        let a = run_trials(&exp, 20_000, 7).unwrap();
        let b = run_trials(&exp, 20_000, 7).unwrap();
        assert_eq!(a, b);
        let c = run_trials_blocked(&exp, 20_000, 7, 997).unwrap();
        assert_eq!(a.tally, c.tally);
        let d = run_trials(&exp, 20_000, 8).unwrap();
        assert_ne!(a.tally, d.tally);
    }

    #[test]
    fn coincidences_never_exceed_singles() {
        let mut exp = Experiment::new(
            vec![disc(-8e9, 292e-9), disc(8e9, 828e-9)],
            Sweep::along_x(0.0, 10.0, 6),
            ConversionSettings {
                method: ConversionMethod::SingleCrystal,
                ..Default::default()
            },
        );
        exp.efficiency = 0.7;
        exp.extinction = 0.05;
        let t = run_trials(&exp, 50_000, 1).unwrap().tally;
        for i in 0..t.separations.len() {
            assert!(t.coincidences[i] <= t.singles_a[i].min(t.singles_b[i]));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let exp = single_disc();
        assert!(run_trials(&exp, 0, 1).is_err());
        let mut zero = single_disc();
        zero.sources = vec![DiscSource::new(pos(0.0, 0.0, 1e17), 2e9, 292e-9, 0.0).unwrap().into()];
        assert!(matches!(run_trials(&zero, 10, 1), Err(Error::Scenario(_))));
    }

    #[test]
    fn single_disc_tracks_the_analytic_curve() {
        let exp = single_disc();
        let mc = histogram_to_curve(&run_trials(&exp, 200_000, 3).unwrap().tally).unwrap();
        let analytic = Evaluator::default()
            .curve(Variant::Single, &exp.sources, &exp.sweep, 1.0)
            .unwrap();
        let mut inside = 0;
        for (m, a) in mc.curve.points().iter().zip(analytic.points()) {
            if (m.value - a.value).abs() <= 3.0 * m.error.unwrap() {
                inside += 1;
            }
        }
        assert!(inside >= 10, "{inside} of 11 within 3σ");
        assert!((mc.curve.values()[0] - 2.0).abs() < 0.02);
    }

    #[test]
    fn plateau_normalization_matches_analytic_for_each_method() {
        let sources = vec![disc(-8e9, 292e-9), disc(8e9, 828e-9)];
        for method in [ConversionMethod::None, ConversionMethod::SingleCrystal, ConversionMethod::TwoCrystal] {
            let exp = Experiment::new(
                sources.clone(),
                Sweep::along_x(60.0, 61.0, 2),
                ConversionSettings {
                    method,
                    ..Default::default()
                },
            );
            let model = Model::new(&exp).unwrap();
            let (plateau, _) = normalization_constants(&model, &exp).unwrap();
            assert_eq!(plateau, 4.0);
            let mc = histogram_to_curve(&run_trials(&exp, 200_000, 11).unwrap().tally).unwrap();
            for p in mc.curve.points() {
                assert!((p.value - 4.0).abs() < 4.0 * p.error.unwrap(), "{method}: {}", p.value);
            }
        }
    }

    fn toy_points(separation_phase: f64) -> Experiment {
        // Two point sources at one position; the baseline is chosen so that
        // Δφ1 - Δφ2 equals `separation_phase`.
        let (l1, l2) = (600e-9, 400e-9);
        let c = pos(0.0, 0.0, 1.0);
        let path_diff = separation_phase / (TAU * (1.0 / l1 - 1.0 / l2));
        // |c - r_A| - |c - r_B| with r_B at the origin and r_A = (x, 0, 0)
        let x = ((1.0 + path_diff).powi(2) - 1.0).sqrt();
        let mut exp = Experiment::new(
            vec![
                PointSource::new(c, l1, 1.0).unwrap().into(),
                PointSource::new(c, l2, 1.0).unwrap().into(),
            ],
            Sweep::along_x(x, x + 1e-12, 2),
            ConversionSettings {
                method: ConversionMethod::SingleCrystal,
                theta: FRAC_PI_4,
                ..Default::default()
            },
        );
        exp.pair_sampling = PairSampling::OnePerSource;
        exp
    }

    #[test]
    fn toy_model_constructive_versus_destructive() {
        // Φ = Δφ1 - Δφ2 enters as cos Φ
        let constructive = run_trials(&toy_points(-TAU), 100_000, 5).unwrap().tally;
        let destructive = run_trials(&toy_points(-std::f64::consts::PI), 100_000, 5).unwrap().tally;
        assert!(constructive.coincidences[0] > 10_000);
        assert_eq!(destructive.coincidences[0], 0);
        assert!(histogram_to_curve(&destructive).is_err());
    }

    #[test]
    fn full_swap_matches_lambda1_alone() {
        let both = Experiment::new(
            vec![disc(-8e9, 828e-9), disc(8e9, 292e-9)],
            Sweep::along_x(0.0, 30.0, 7),
            ConversionSettings {
                method: ConversionMethod::SingleCrystal,
                theta: FRAC_PI_2,
                filter_wavelength: Some(292e-9),
                ..Default::default()
            },
        );
        let mut alone = both.clone();
        alone.sources = vec![disc(-8e9, 828e-9)];
        alone.conversion.method = ConversionMethod::None;
        let a = histogram_to_curve(&run_trials(&both, 400_000, 2).unwrap().tally).unwrap();
        let b = histogram_to_curve(&run_trials(&alone, 400_000, 9).unwrap().tally).unwrap();
        for (p, q) in a.curve.points().iter().zip(b.curve.points()) {
            let (x, y) = (p.value / a.curve.normalization.plateau, q.value / b.curve.normalization.plateau);
            let sigma = (p.error.unwrap() / a.curve.normalization.plateau).hypot(q.error.unwrap());
            assert!((x - y).abs() < 3.0 * sigma, "{x} vs {y} ± {sigma}");
        }
    }

    #[test]
    fn tally_csv_round_trip() {
        let mut exp = single_disc();
        exp.scenario_hash = "abc123".into();
        let t = run_trials(&exp, 1000, 42).unwrap().tally;
        let csv = t.to_csv();
        assert!(csv.starts_with("# seed=42 scenario=abc123"));
        assert_eq!(csv.lines().nth(1), Some(TALLY_HEADER));
        assert_eq!(CoincidenceTally::from_csv(&csv).unwrap(), t);
    }

    #[test]
    fn low_acceptance_warns() {
        let mut exp = single_disc();
        exp.efficiency = 0.01;
        exp.acceptance_floor = 0.05;
        let r = run_trials(&exp, 2000, 1).unwrap();
        assert_eq!(r.warnings.len(), 1);
        let (raw, corrected) = r.tally.coincidence_rates();
        assert!(corrected > raw);
    }

    #[test]
    fn random_source_phases_cancel() {
        let exp = Experiment::new(
            vec![disc(-8e9, 292e-9), disc(8e9, 828e-9)],
            Sweep::along_x(0.0, 5.0, 2),
            ConversionSettings {
                method: ConversionMethod::SingleCrystal,
                ..Default::default()
            },
        );
        let model = Model::new(&exp).unwrap();
        let bl = exp.sweep.baseline(3.3);
        let phases = path_phases(&exp.sources, &bl).unwrap();
        let mut words = [0u64; WORDS_PER_TRIAL];
        for (i, w) in words.iter_mut().enumerate() {
            *w = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
        let mut t = draw(&model, &exp.sources, &words);
        let p0 = probabilities(&model, &phases, &bl, &t).0;
        t.events[0].phase += 1.234;
        t.events[1].phase -= 2.5;
        let p1 = probabilities(&model, &phases, &bl, &t).0;
        assert!((p0 - p1).abs() < 1e-15);
    }
}

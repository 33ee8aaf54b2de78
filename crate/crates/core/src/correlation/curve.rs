//! Sampled correlation curves and their CSV form.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const CURVE_HEADER: &str = "separation_m,value,variant";
pub const CURVE_HEADER_WITH_ERROR: &str = "separation_m,value,variant,error";
pub const MAP_HEADER: &str = "x_m,y_m,value,variant";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// One source, `G¹⁽²⁾`.
    Single,
    /// Wavelength-resolving detectors; no cross-wavelength interference.
    NoE2i2,
    /// Converted detection; every pair of sources interferes.
    E2i2,
    /// `E2i2 - NoE2i2`.
    Delta,
    /// Converted detection with three or more sources.
    Multi,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Single,
        Variant::NoE2i2,
        Variant::E2i2,
        Variant::Delta,
        Variant::Multi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Single => "single",
            Variant::NoE2i2 => "no-e2i2",
            Variant::E2i2 => "e2i2",
            Variant::Delta => "delta",
            Variant::Multi => "multi",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown curve variant `{s}` (expected one of single, no-e2i2, e2i2, delta, multi)")))
    }
}

/// How curve values relate to the analytic convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Value approached at large baselines, `(Σ γ̃(A,A))(Σ γ̃(B,B))` times `scale`.
    /// Zero for delta curves.
    pub plateau: f64,
    /// Overall "arbitrary units" multiplier.
    pub scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            plateau: 1.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub separation: f64,
    pub value: f64,
    /// One-sigma statistical error, present for simulated curves.
    pub error: Option<f64>,
}

/// `G²` sampled against baseline separation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    points: Vec<CurvePoint>,
    pub variant: Variant,
    pub normalization: Normalization,
}

impl CorrelationCurve {
    pub fn new(points: Vec<CurvePoint>, variant: Variant, normalization: Normalization) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].separation > w[0].separation) {
                return Err(Error::invalid(
                    "separation",
                    format!("must be strictly increasing ({} then {})", w[0].separation, w[1].separation),
                ));
            }
        }
        for p in &points {
            if !p.separation.is_finite() || !p.value.is_finite() {
                return Err(Error::invalid("value", format!("non-finite sample at {}", p.separation)));
            }
        }
        Ok(Self {
            points,
            variant,
            normalization,
        })
    }

    pub fn from_values(separations: &[f64], values: &[f64], variant: Variant, normalization: Normalization) -> Result<Self> {
        if separations.len() != values.len() {
            return Err(Error::invalid("values", "length differs from separations"));
        }
        let points = separations
            .iter()
            .zip(values)
            .map(|(&separation, &value)| CurvePoint {
                separation,
                value,
                error: None,
            })
            .collect();
        Self::new(points, variant, normalization)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn separations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.separation).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn has_errors(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.error.is_some())
    }

    /// Pointwise difference `self - other` on an identical grid.
    pub fn difference(&self, other: &CorrelationCurve, variant: Variant) -> Result<CorrelationCurve> {
        if self.len() != other.len() || self.points.iter().zip(&other.points).any(|(a, b)| a.separation != b.separation) {
            return Err(Error::invalid("curve", "curves are sampled on different grids"));
        }
        let points = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| CurvePoint {
                separation: a.separation,
                value: a.value - b.value,
                error: match (a.error, b.error) {
                    (Some(x), Some(y)) => Some(x.hypot(y)),
                    _ => None,
                },
            })
            .collect();
        CorrelationCurve::new(
            points,
            variant,
            Normalization {
                plateau: self.normalization.plateau - other.normalization.plateau,
                scale: self.normalization.scale,
            },
        )
    }

    pub fn to_csv(&self) -> String {
        let with_err = self.has_errors();
        let mut out = String::new();
        out.push_str(if with_err { CURVE_HEADER_WITH_ERROR } else { CURVE_HEADER });
        out.push('\n');
        for p in &self.points {
            match (with_err, p.error) {
                (true, Some(e)) => out.push_str(&format!("{},{},{},{}\n", p.separation, p.value, self.variant, e)),
                _ => out.push_str(&format!("{},{},{}\n", p.separation, p.value, self.variant)),
            }
        }
        out
    }

    /// Parse a curve written by [`CorrelationCurve::to_csv`]. Lines starting
    /// with `#` are ignored. The normalization is not stored in the file and
    /// must be supplied.
    pub fn from_csv(text: &str, normalization: Normalization) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty curve file".into()))?;
        let with_err = match header.trim() {
            CURVE_HEADER => false,
            CURVE_HEADER_WITH_ERROR => true,
            other => return Err(Error::Parse(format!("unexpected curve header `{other}`"))),
        };
        let mut variant = None;
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let expect = if with_err { 4 } else { 3 };
            if fields.len() != expect {
                return Err(Error::Parse(format!("row {}: expected {expect} fields, got {}", i + 2, fields.len())));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: bad {what} `{s}`: {e}", i + 2)))
            };
            let v: Variant = fields[2].trim().parse()?;
            match variant {
                None => variant = Some(v),
                Some(existing) if existing != v => {
                    return Err(Error::Parse(format!("row {}: mixed variants {existing} and {v}", i + 2)));
                }
                _ => {}
            }
            points.push(CurvePoint {
                separation: num(fields[0], "separation")?,
                value: num(fields[1], "value")?,
                error: if with_err { Some(num(fields[3], "error")?) } else { None },
            });
        }
        let variant = variant.ok_or_else(|| Error::EmptyCurve("no samples in curve file".into()))?;
        Self::new(points, variant, normalization)
    }
}

/// Correlation values over a rectangular grid of detector-A offsets (detector
/// B at the origin).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `values[iy * xs.len() + ix]`.
    pub values: Vec<f64>,
    pub variant: Variant,
}

impl CorrelationMap {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>, variant: Variant) -> Result<Self> {
        if values.len() != xs.len() * ys.len() {
            return Err(Error::invalid("values", "map size does not match its axes"));
        }
        for axis in [&xs, &ys] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid("axis", "map axes must be strictly increasing"));
            }
        }
        Ok(Self { xs, ys, values, variant })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MAP_HEADER);
        out.push('\n');
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                out.push_str(&format!("{x},{y},{},{}\n", self.at(ix, iy), self.variant));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == MAP_HEADER => {}
            Some(h) => return Err(Error::Parse(format!("unexpected map header `{h}`"))),
            None => return Err(Error::Parse("empty map file".into())),
        }
        let mut rows = Vec::new();
        let mut variant = None;
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("row {}: expected 4 fields", i + 2)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)));
            rows.push((parse(f[0])?, parse(f[1])?, parse(f[2])?));
            let v: Variant = f[3].trim().parse()?;
            variant.get_or_insert(v);
        }
        let variant = variant.ok_or_else(|| Error::EmptyCurve("no samples in map file".into()))?;
        let mut xs: Vec<f64> = Vec::new();
        for r in &rows {
            if xs.contains(&r.0) {
                break;
            }
            xs.push(r.0);
        }
        let nx = xs.len();
        if nx == 0 || rows.len() % nx != 0 {
            return Err(Error::Parse("map rows do not form a grid".into()));
        }
        let ys: Vec<f64> = rows.iter().step_by(nx).map(|r| r.1).collect();
        let values = rows.iter().map(|r| r.2).collect();
        Self::new(xs, ys, values, variant)
    }
}

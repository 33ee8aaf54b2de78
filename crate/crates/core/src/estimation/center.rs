//! Pairwise center vectors from the 2D spectrum of a correlation map.
//!
//! Each cross-wavelength pair `(p, q)` contributes
//! `cos(2π Δ·k_pq + const)` times an envelope, with
//! `k_pq = (c_p/λ_p − c_q/λ_q)/L` in cycles per meter of baseline. Its
//! spectral peak is the convolution of two uniform discs (the transforms of
//! the Airy envelopes), so it is flat-topped; peaks are located by their
//! power centroid over the connected half-maximum region, not by argmax.

use super::spectrum::{power_2d, signed_bin};
use crate::correlation::{wavelength_groups, CorrelationMap, Variant};
use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Relative tolerance for treating two expected peak strengths as equal.
const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CenterSettings {
    pub padding: usize,
    /// Distance to the sources; needed for priors and physical vectors.
    pub distance: Option<f64>,
    /// Approximate transverse centers (meters) used to assign peaks to pairs
    /// and fix their sign.
    pub priors: Option<Vec<[f64; 2]>>,
}

impl Default for CenterSettings {
    fn default() -> Self {
        Self {
            padding: 4,
            distance: None,
            priors: None,
        }
    }
}

/// `c_p/λ_p − c_q/λ_q` divided by `L`, in cycles per meter of baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterVector {
    pub p: usize,
    pub q: usize,
    pub k: [f64; 2],
    /// False when the sign of `k` is a convention (`k_x > 0`); a real map
    /// cannot tell `k` from `−k` without priors.
    pub sign_resolved: bool,
    /// Spectral power at the peak.
    pub power: f64,
}

impl CenterVector {
    pub fn reversed(&self) -> Self {
        Self {
            p: self.q,
            q: self.p,
            k: [-self.k[0], -self.k[1]],
            ..*self
        }
    }

    /// `c_p/λ_p − c_q/λ_q` in the units of `c/λ` (dimensionless).
    pub fn physical(&self, distance: f64) -> [f64; 2] {
        [self.k[0] * distance, self.k[1] * distance]
    }

    pub fn magnitude(&self) -> f64 {
        self.k[0].hypot(self.k[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CenterVectors {
    pub vectors: Vec<CenterVector>,
    /// Pairs whose peaks could not be told apart.
    pub ambiguous: Vec<(usize, usize)>,
    /// Pairs whose vector is too short to separate from zero frequency.
    pub unresolved_at_dc: Vec<(usize, usize)>,
    /// Frequency resolution of the padded transform, cycles/m.
    pub resolution: [f64; 2],
}

impl CenterVectors {
    /// Vector for `(p, q)`; `get(q, p)` is exactly `−get(p, q)`.
    pub fn get(&self, p: usize, q: usize) -> Option<CenterVector> {
        self.vectors.iter().find_map(|v| {
            if (v.p, v.q) == (p, q) {
                Some(*v)
            } else if (v.q, v.p) == (p, q) {
                Some(v.reversed())
            } else {
                None
            }
        })
    }
}

struct Peak {
    k: [f64; 2],
    power: f64,
}

/// Extract the cross-wavelength center vectors from a delta-variant map.
/// `wavelengths[i]` is the wavelength of source `i`.
pub fn extract_center_vectors(map: &CorrelationMap, wavelengths: &[f64], settings: &CenterSettings) -> Result<CenterVectors> {
    if map.variant != Variant::Delta {
        return Err(Error::invalid(
            "map",
            format!("center extraction needs the `delta` variant, got `{}`", map.variant),
        ));
    }
    if wavelengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("wavelength", "must be positive"));
    }
    let (nx, ny) = (map.xs.len(), map.ys.len());
    if nx < 4 || ny < 4 {
        return Err(Error::InsufficientBaseline("map needs at least 4 samples per axis".into()));
    }
    let hx = uniform_step(&map.xs)?;
    let hy = uniform_step(&map.ys)?;

    let groups = wavelength_groups(wavelengths);
    let mut pairs = Vec::new();
    for p in 0..wavelengths.len() {
        for q in p + 1..wavelengths.len() {
            if groups[p] != groups[q] {
                pairs.push((p, q));
            }
        }
    }
    let (power, px, py) = power_2d(&map.values, nx, ny, settings.padding);
    let df = [1.0 / (px as f64 * hx), 1.0 / (py as f64 * hy)];
    let mut out = CenterVectors {
        resolution: df,
        ..Default::default()
    };
    if pairs.is_empty() {
        return Ok(out);
    }
    // the main lobe of the 2D Hann window spans two raw bins on each side
    let dc_radius = [2.0 / (nx as f64 * hx), 2.0 / (ny as f64 * hy)];
    let near_dc = |k: [f64; 2]| (k[0] / dc_radius[0]).hypot(k[1] / dc_radius[1]) < 1.0;

    let peaks = find_peaks(&power, px, py, df, pairs.len() + 1);

    if let Some(priors) = &settings.priors {
        let l = settings
            .distance
            .ok_or_else(|| Error::invalid("distance", "center priors need the source distance"))?;
        if priors.len() != wavelengths.len() {
            return Err(Error::invalid("priors", "one prior center per source is required"));
        }
        let predicted: Vec<[f64; 2]> = pairs
            .iter()
            .map(|&(p, q)| {
                let (a, b) = (&priors[p], &priors[q]);
                let (lp, lq) = (wavelengths[p], wavelengths[q]);
                [(a[0] / lp - b[0] / lq) / l, (a[1] / lp - b[1] / lq) / l]
            })
            .collect();
        let mut open: Vec<usize> = Vec::new();
        for (i, &k) in predicted.iter().enumerate() {
            if near_dc(k) {
                out.unresolved_at_dc.push(pairs[i]);
            } else {
                open.push(i);
            }
        }
        let mut free: Vec<usize> = (0..peaks.len()).filter(|&j| !near_dc(peaks[j].k)).collect();
        while !open.is_empty() && !free.is_empty() {
            let mut best = (f64::INFINITY, 0, 0, 1.0);
            for (oi, &i) in open.iter().enumerate() {
                for (fj, &j) in free.iter().enumerate() {
                    for s in [1.0, -1.0] {
                        let d = (s * peaks[j].k[0] - predicted[i][0]).hypot(s * peaks[j].k[1] - predicted[i][1]);
                        if d < best.0 {
                            best = (d, oi, fj, s);
                        }
                    }
                }
            }
            let (_, oi, fj, s) = best;
            let (i, j) = (open.swap_remove(oi), free.swap_remove(fj));
            let (p, q) = pairs[i];
            out.vectors.push(CenterVector {
                p,
                q,
                k: [s * peaks[j].k[0], s * peaks[j].k[1]],
                sign_resolved: true,
                power: peaks[j].power,
            });
        }
        out.ambiguous.extend(open.iter().map(|&i| pairs[i]));
    } else {
        // strongest expected peak first: the pair peak height scales as the
        // square of the shorter wavelength of the pair
        let strength = |&(p, q): &(usize, usize)| wavelengths[p].min(wavelengths[q]).powi(2);
        let mut order = pairs.clone();
        order.sort_by(|a, b| strength(b).total_cmp(&strength(a)));
        for (rank, &(p, q)) in order.iter().enumerate() {
            let tied = order
                .iter()
                .any(|o| *o != (p, q) && (strength(o) - strength(&(p, q))).abs() <= TIE_TOLERANCE * strength(&(p, q)));
            if tied {
                out.ambiguous.push((p, q));
            }
            match peaks.get(rank) {
                Some(pk) if near_dc(pk.k) => out.unresolved_at_dc.push((p, q)),
                Some(pk) => {
                    let s = if pk.k[0] > 0.0 || (pk.k[0] == 0.0 && pk.k[1] >= 0.0) { 1.0 } else { -1.0 };
                    out.vectors.push(CenterVector {
                        p,
                        q,
                        k: [s * pk.k[0], s * pk.k[1]],
                        sign_resolved: false,
                        power: pk.power,
                    });
                }
                None => out.ambiguous.push((p, q)),
            }
        }
        out.ambiguous.sort_unstable();
        out.ambiguous.dedup();
    }
    Ok(out)
}

fn uniform_step(axis: &[f64]) -> Result<f64> {
    let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h) {
        return Err(Error::invalid("map", "spectral estimation needs a uniform grid"));
    }
    Ok(h)
}

/// Strongest distinct peaks of a full-plane power spectrum, one per `±k`
/// pair, ordered by power.
fn find_peaks(power: &[f64], px: usize, py: usize, df: [f64; 2], max: usize) -> Vec<Peak> {
    let at = |x: i64, y: i64| power[(y.rem_euclid(py as i64) as usize) * px + x.rem_euclid(px as i64) as usize];
    let mut candidates: Vec<usize> = (0..power.len())
        .filter(|&i| {
            let (x, y) = ((i % px) as i64, (i / px) as i64);
            let c = power[i];
            c > 0.0
                && (-1..=1).all(|dy| {
                    (-1..=1).all(|dx| (dx == 0 && dy == 0) || at(x + dx, y + dy) <= c)
                })
        })
        .collect();
    candidates.sort_by(|&a, &b| power[b].total_cmp(&power[a]));

    let mut claimed = vec![false; power.len()];
    let mut peaks = Vec::new();
    for i in candidates {
        if peaks.len() >= max {
            break;
        }
        if claimed[i] {
            continue;
        }
        let region = half_max_region(power, px, py, i);
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        let (ix0, iy0) = (signed_bin(i % px, px), signed_bin(i / px, py));
        for &j in &region {
            // unwrap relative to the seed so regions straddling the edge stay whole
            let (mut bx, mut by) = (signed_bin(j % px, px), signed_bin(j / px, py));
            bx += (ix0 - bx + px as i64 / 2).div_euclid(px as i64) * px as i64;
            by += (iy0 - by + py as i64 / 2).div_euclid(py as i64) * py as i64;
            sx += power[j] * bx as f64;
            sy += power[j] * by as f64;
            sw += power[j];
            claimed[j] = true;
            // the mirror image belongs to the same peak
            let mx = (-((j % px) as i64)).rem_euclid(px as i64) as usize;
            let my = (-((j / px) as i64)).rem_euclid(py as i64) as usize;
            claimed[my * px + mx] = true;
        }
        peaks.push(Peak {
            k: [sx / sw * df[0], sy / sw * df[1]],
            power: power[i],
        });
    }
    peaks
}

/// Cells connected (4-neighbour, periodic) to `seed` with power at least
/// half the seed's.
fn half_max_region(power: &[f64], px: usize, py: usize, seed: usize) -> Vec<usize> {
    let half = 0.5 * power[seed];
    let mut seen = vec![false; power.len()];
    let mut queue = VecDeque::from([seed]);
    seen[seed] = true;
    let mut region = Vec::new();
    while let Some(i) = queue.pop_front() {
        region.push(i);
        let (x, y) = (i % px, i / px);
        let next = [
            y * px + (x + 1) % px,
            y * px + (x + px - 1) % px,
            ((y + 1) % py) * px + x,
            ((y + py - 1) % py) * px + x,
        ];
        for j in next {
            if !seen[j] && power[j] >= half {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    region
}

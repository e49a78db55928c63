//! Line patterns (random intensities, Lorentz correction, normalization) and
//! Gaussian rendering onto a uniform 2θ grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reflection::{TwoThetaWindow, DEFAULT_WAVELENGTH};

/// Beyond this many FWHM a Gaussian contributes less than 2⁻⁴⁰⁰ of its height.
const RENDER_CUTOFF_FWHM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("Lorentz factor undefined at 2θ = {0}°")]
    LorentzDomain(f64),
    #[error("line pattern needs at least one peak")]
    NoPeaks,
    #[error("peak at 2θ = {0}° lies outside the pattern window")]
    OutsideWindow(f64),
    #[error("invalid pattern config: {0}")]
    Config(String),
    #[error("negative intensity {0}")]
    NegativeIntensity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityLaw {
    /// Uniform on (0, 1].
    Uniform,
    /// Every peak drawn as 1 before correction.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub wavelength: f64,
    pub two_theta_min: f64,
    pub two_theta_max: f64,
    pub n_points: usize,
    pub fwhm: f64,
    pub intensity_law: IntensityLaw,
    pub seed: u64,
    /// Index bound for peak enumeration; `None` derives it from the window.
    pub h_max: Option<u32>,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            wavelength: DEFAULT_WAVELENGTH,
            two_theta_min: 10.0,
            two_theta_max: 110.0,
            n_points: 4000,
            fwhm: 0.2,
            intensity_law: IntensityLaw::Uniform,
            seed: 0,
            h_max: None,
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if !(self.two_theta_min > 0.0 && self.two_theta_min < self.two_theta_max && self.two_theta_max < 180.0) {
            return bad(format!(
                "window must satisfy 0 < min < max < 180, got [{}, {}]",
                self.two_theta_min, self.two_theta_max
            ));
        }
        if self.n_points < 2 {
            return bad(format!("n_points must be at least 2, got {}", self.n_points));
        }
        if !(self.fwhm > 0.0) || !self.fwhm.is_finite() {
            return bad(format!("fwhm must be positive, got {}", self.fwhm));
        }
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return bad(format!("wavelength must be positive, got {}", self.wavelength));
        }
        if self.h_max == Some(0) {
            return bad("h_max must be at least 1".into());
        }
        Ok(())
    }

    pub fn window(&self) -> TwoThetaWindow {
        TwoThetaWindow {
            min: self.two_theta_min,
            max: self.two_theta_max,
        }
    }

    pub fn step(&self) -> f64 {
        (self.two_theta_max - self.two_theta_min) / (self.n_points - 1) as f64
    }

    /// The i-th grid angle.
    pub fn grid_point(&self, i: usize) -> f64 {
        self.two_theta_min + i as f64 * self.step()
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Lattice {
        /// Free lattice parameters in the family's order.
        params: Vec<f64>,
        lattice_index: u64,
        replicate: u32,
    },
    Record {
        /// Zero-based record index in the ingestion stream.
        index: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePattern {
    /// (2θ in degrees, intensity), ascending in 2θ.
    pub peaks: Vec<(f64, f64)>,
    pub label: u16,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPattern {
    pub samples: Vec<f32>,
    pub label: u16,
    pub provenance: Provenance,
}

/// Powder Lorentz factor `1 / (sin²θ cos θ)` without polarization.
pub fn lorentz_factor(two_theta: f64) -> Result<f64, SynthError> {
    if !(two_theta > 0.0 && two_theta < 180.0) {
        return Err(SynthError::LorentzDomain(two_theta));
    }
    let theta = (two_theta / 2.0).to_radians();
    let s = theta.sin();
    Ok(1.0 / (s * s * theta.cos()))
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one sample, fixed by its coordinates so that the
/// order in which samples are generated cannot affect their values.
pub fn sample_rng(seed: u64, label: u16, lattice_index: u64, replicate: u32) -> ChaCha8Rng {
    let mut z = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for part in [label as u64, lattice_index, replicate as u64] {
        z = mix64(z.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ part);
    }
    ChaCha8Rng::seed_from_u64(z)
}

fn draw(law: IntensityLaw, rng: &mut impl Rng) -> f64 {
    match law {
        // 1 - [0, 1) gives (0, 1]
        IntensityLaw::Uniform => 1.0 - rng.random::<f64>(),
        IntensityLaw::Constant => 1.0,
    }
}

/// Scales intensities so the strongest is exactly 1.
fn normalize(peaks: &mut [(f64, f64)]) -> Result<(), SynthError> {
    let max = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(SynthError::NoPeaks);
    }
    for p in peaks.iter_mut() {
        p.1 = if p.1 == max { 1.0 } else { p.1 / max };
    }
    Ok(())
}

/// Draws one intensity per allowed position, applies the Lorentz factor and
/// normalizes the maximum to 1.
pub fn make_line_pattern(
    positions: &[f64],
    label: u16,
    provenance: Provenance,
    cfg: &PatternConfig,
    rng: &mut impl Rng,
) -> Result<LinePattern, SynthError> {
    if positions.is_empty() {
        return Err(SynthError::NoPeaks);
    }
    let window = cfg.window();
    let mut peaks = Vec::with_capacity(positions.len());
    for &tt in positions {
        if !window.contains(tt) {
            return Err(SynthError::OutsideWindow(tt));
        }
        let raw = draw(cfg.intensity_law, rng);
        peaks.push((tt, raw * lorentz_factor(tt)?));
    }
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    normalize(&mut peaks)?;
    Ok(LinePattern {
        peaks,
        label,
        provenance,
    })
}

/// Builds a line pattern from externally computed peaks, optionally applying
/// the Lorentz factor, then normalizes.
pub fn line_pattern_from_peaks(
    mut peaks: Vec<(f64, f64)>,
    label: u16,
    provenance: Provenance,
    apply_lorentz: bool,
) -> Result<LinePattern, SynthError> {
    for p in peaks.iter_mut() {
        if p.1 < 0.0 || p.1.is_nan() {
            return Err(SynthError::NegativeIntensity(p.1));
        }
        if apply_lorentz {
            p.1 *= lorentz_factor(p.0)?;
        }
    }
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    normalize(&mut peaks)?;
    Ok(LinePattern {
        peaks,
        label,
        provenance,
    })
}

/// Convolves a line pattern with a Gaussian of the configured FWHM on the
/// uniform grid and rescales the result so its maximum is 1.
pub fn render(lp: &LinePattern, cfg: &PatternConfig) -> RenderedPattern {
    let n = cfg.n_points;
    let step = cfg.step();
    let mut acc = vec![0.0f64; n];
    let k = -4.0 * std::f64::consts::LN_2 / (cfg.fwhm * cfg.fwhm);
    let reach = (RENDER_CUTOFF_FWHM * cfg.fwhm).max(step);
    for &(pos, intensity) in &lp.peaks {
        if intensity == 0.0 {
            continue;
        }
        let lo = ((pos - reach - cfg.two_theta_min) / step).floor().max(0.0) as usize;
        let hi = (((pos + reach - cfg.two_theta_min) / step).ceil().max(0.0) as usize).min(n - 1);
        if lo > hi || lo >= n {
            continue;
        }
        for (i, slot) in acc.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = cfg.grid_point(i) - pos;
            *slot += intensity * (k * d * d).exp();
        }
    }
    let max = acc.iter().copied().fold(0.0, f64::max);
    let samples = if max > 0.0 {
        acc.iter()
            .map(|&v| if v == max { 1.0 } else { (v / max) as f32 })
            .collect()
    } else {
        vec![0.0; n]
    };
    RenderedPattern {
        samples,
        label: lp.label,
        provenance: lp.provenance.clone(),
    }
}

//! Reciprocal-lattice geometry, peak positions and the systematic-absence test.
//!
//! Peak positions use the reciprocal quadratic form
//! `Q = h²a*² + k²b*² + l²c*² + 2klb*c*cosα* + 2hla*c*cosβ* + 2hka*b*cosγ*`
//! with `Q = 1/d²`. A reflection `h` is systematically absent in a group when
//! some operation `(R, t)` fixes it (`hᵀR = hᵀ`) while `h·t` is not an integer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spacegroup::{CrystalSystem, LatticeError, LatticeParams, SpaceGroup, TRANSLATION_DENOMINATOR};

/// Two reflections share a peak position when their Q values differ by less
/// than this (Å⁻²).
pub const Q_MERGE_TOL: f64 = 1e-9;

/// Cu Kα1.
pub const DEFAULT_WAVELENGTH: f64 = 1.5406;

pub const DEFAULT_H_MAX: u32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionError {
    #[error("degenerate cell: {0}")]
    Degenerate(#[from] LatticeError),
    #[error("reflection with Q = {q} is outside the limiting sphere for wavelength {wavelength} Å")]
    OutOfSphere { q: f64, wavelength: f64 },
    #[error("invalid 2θ window [{min}, {max}]")]
    InvalidWindow { min: f64, max: f64 },
    #[error("invalid wavelength {0}")]
    InvalidWavelength(f64),
    #[error("invalid Q {0}")]
    InvalidQ(f64),
    #[error("h_max must be at least 1")]
    InvalidHMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hkl {
    pub h: i32,
    pub k: i32,
    pub l: i32,
}

impl Hkl {
    pub const fn new(h: i32, k: i32, l: i32) -> Self {
        Hkl { h, k, l }
    }

    pub fn is_origin(&self) -> bool {
        self.h == 0 && self.k == 0 && self.l == 0
    }

    pub fn neg(&self) -> Hkl {
        Hkl::new(-self.h, -self.k, -self.l)
    }

    fn as_array(&self) -> [i32; 3] {
        [self.h, self.k, self.l]
    }
}

/// Every non-origin index triple with `|h|, |k|, |l| <= h_max`, in lexicographic order.
pub fn hkl_cube(h_max: u32) -> impl Iterator<Item = Hkl> {
    let m = h_max as i32;
    (-m..=m)
        .flat_map(move |h| (-m..=m).flat_map(move |k| (-m..=m).map(move |l| Hkl::new(h, k, l))))
        .filter(|r| !r.is_origin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalLattice {
    pub a_star: f64,
    pub b_star: f64,
    pub c_star: f64,
    pub cos_alpha_star: f64,
    pub cos_beta_star: f64,
    pub cos_gamma_star: f64,
}

/// Reciprocal cell from the closed-form relations between direct and reciprocal parameters.
pub fn reciprocal(lat: &LatticeParams) -> Result<ReciprocalLattice, ReflectionError> {
    let vf = lat.volume_factor();
    if !(vf > 1e-8) {
        return Err(LatticeError::Degenerate(vf).into());
    }
    let [al, be, ga] = [lat.alpha, lat.beta, lat.gamma].map(f64::to_radians);
    let (ca, cb, cg) = (al.cos(), be.cos(), ga.cos());
    let (sa, sb, sg) = (al.sin(), be.sin(), ga.sin());
    let volume = lat.a * lat.b * lat.c * vf;
    Ok(ReciprocalLattice {
        a_star: lat.b * lat.c * sa / volume,
        b_star: lat.a * lat.c * sb / volume,
        c_star: lat.a * lat.b * sg / volume,
        cos_alpha_star: (cb * cg - ca) / (sb * sg),
        cos_beta_star: (ca * cg - cb) / (sa * sg),
        cos_gamma_star: (ca * cb - cg) / (sa * sb),
    })
}

impl ReciprocalLattice {
    /// Reciprocal metric tensor `G*`.
    pub fn metric_tensor(&self) -> [[f64; 3]; 3] {
        let (a, b, c) = (self.a_star, self.b_star, self.c_star);
        [
            [a * a, a * b * self.cos_gamma_star, a * c * self.cos_beta_star],
            [a * b * self.cos_gamma_star, b * b, b * c * self.cos_alpha_star],
            [a * c * self.cos_beta_star, b * c * self.cos_alpha_star, c * c],
        ]
    }
}

/// Q = 1/d² in Å⁻² for reflection `r`.
pub fn q_of(rl: &ReciprocalLattice, r: Hkl) -> f64 {
    let (h, k, l) = (r.h as f64, r.k as f64, r.l as f64);
    let (a, b, c) = (rl.a_star, rl.b_star, rl.c_star);
    h * h * a * a
        + k * k * b * b
        + l * l * c * c
        + 2.0 * k * l * b * c * rl.cos_alpha_star
        + 2.0 * h * l * a * c * rl.cos_beta_star
        + 2.0 * h * k * a * b * rl.cos_gamma_star
}

/// True iff some operation fixes `r` under the row-vector action and
/// contributes a non-integral phase `r·t`.
pub fn is_extinct(g: &SpaceGroup, r: Hkl) -> bool {
    g.ops()
        .iter()
        .any(|op| phase_forbids(op.rotation(), op.translation_twelfths(), r))
}

fn phase_forbids(rotation: &[[i8; 3]; 3], translation: [u8; 3], r: Hkl) -> bool {
    let h = r.as_array();
    for j in 0..3 {
        let hr: i32 = (0..3).map(|i| h[i] * rotation[i][j] as i32).sum();
        if hr != h[j] {
            return false;
        }
    }
    let phase: i32 = (0..3).map(|i| h[i] * translation[i] as i32).sum();
    phase.rem_euclid(TRANSLATION_DENOMINATOR) != 0
}

/// Bragg angle 2θ in degrees for `q = 1/d²`.
pub fn two_theta(q: f64, wavelength: f64) -> Result<f64, ReflectionError> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(ReflectionError::InvalidWavelength(wavelength));
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(ReflectionError::InvalidQ(q));
    }
    let s = wavelength * q.sqrt() / 2.0;
    if s > 1.0 + 1e-12 {
        return Err(ReflectionError::OutOfSphere { q, wavelength });
    }
    Ok(2.0 * s.min(1.0).asin().to_degrees())
}

/// Largest Q observable at `two_theta_max` degrees.
pub fn q_max(two_theta_max: f64, wavelength: f64) -> f64 {
    let s = (two_theta_max.to_radians() / 2.0).sin();
    (2.0 * s / wavelength).powi(2)
}

/// Smallest index bound guaranteeing every reflection up to `two_theta_max`
/// is inside the scanned cube: `|h| <= |a|·sqrt(Q_max)` and likewise for k, l.
pub fn required_h_max(lat: &LatticeParams, two_theta_max: f64, wavelength: f64) -> u32 {
    let r = q_max(two_theta_max, wavelength).sqrt();
    let longest = lat.a.max(lat.b).max(lat.c);
    ((longest * r).floor() as u32).max(1)
}

/// Closed 2θ interval in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoThetaWindow {
    pub min: f64,
    pub max: f64,
}

impl TwoThetaWindow {
    pub fn new(min: f64, max: f64) -> Result<Self, ReflectionError> {
        if !(min >= 0.0 && min < max && max <= 180.0) {
            return Err(ReflectionError::InvalidWindow { min, max });
        }
        Ok(TwoThetaWindow { min, max })
    }

    pub fn contains(&self, two_theta: f64) -> bool {
        two_theta >= self.min && two_theta <= self.max
    }
}

/// Exact integer invariant shared by all reflections at one powder position,
/// for systems whose metric makes one available.
pub fn position_key(system: CrystalSystem, r: Hkl) -> Option<(i64, i64)> {
    let (h, k, l) = (r.h as i64, r.k as i64, r.l as i64);
    match system {
        CrystalSystem::Cubic => Some((h * h + k * k + l * l, 0)),
        CrystalSystem::Tetragonal => Some((h * h + k * k, l * l)),
        CrystalSystem::Trigonal | CrystalSystem::Hexagonal => Some((h * h + h * k + k * k, l * l)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPosition {
    pub q: f64,
    pub two_theta: f64,
    pub contributors: Vec<Hkl>,
    pub allowed: bool,
}

/// A set of reflections known to share one Q, before merging coincidences.
struct Bucket {
    q: f64,
    allowed: bool,
    members: Vec<Hkl>,
}

/// Sorts buckets by Q, merges neighbours closer than [`Q_MERGE_TOL`], and
/// keeps allowed positions inside the window.
fn merge_buckets(
    mut buckets: Vec<Bucket>,
    window: &TwoThetaWindow,
    wavelength: f64,
    keep_members: bool,
) -> Vec<PeakPosition> {
    buckets.sort_by(|x, y| x.q.total_cmp(&y.q));
    let mut merged: Vec<PeakPosition> = Vec::new();
    let mut last_q = f64::NEG_INFINITY;
    for b in buckets {
        match merged.last_mut() {
            Some(cur) if b.q - last_q < Q_MERGE_TOL => {
                cur.allowed |= b.allowed;
                if keep_members {
                    cur.contributors.extend(b.members);
                }
            }
            _ => merged.push(PeakPosition {
                q: b.q,
                two_theta: f64::NAN,
                contributors: if keep_members { b.members } else { Vec::new() },
                allowed: b.allowed,
            }),
        }
        last_q = b.q;
    }
    merged
        .into_iter()
        .filter(|p| p.allowed)
        .filter_map(|mut p| {
            p.two_theta = two_theta(p.q, wavelength).ok()?;
            window.contains(p.two_theta).then_some(p)
        })
        .collect()
}

/// Enumerates observable peak positions of `g` at lattice `lat` by scanning
/// every reflection with `|h|, |k|, |l| <= h_max`.
pub fn enumerate_peaks(
    g: &SpaceGroup,
    lat: &LatticeParams,
    window: &TwoThetaWindow,
    wavelength: f64,
    h_max: u32,
) -> Result<Vec<PeakPosition>, ReflectionError> {
    if h_max < 1 {
        return Err(ReflectionError::InvalidHMax);
    }
    if !(wavelength > 0.0) {
        return Err(ReflectionError::InvalidWavelength(wavelength));
    }
    TwoThetaWindow::new(window.min, window.max)?;
    lat.check_system(g.system())?;
    let rl = reciprocal(lat)?;

    let buckets: Vec<Bucket> = match position_key(g.system(), Hkl::new(1, 0, 0)) {
        Some(_) => {
            let mut by_key: std::collections::BTreeMap<(i64, i64), Bucket> = Default::default();
            for r in hkl_cube(h_max) {
                let key = position_key(g.system(), r).unwrap();
                let q = q_of(&rl, r);
                let allowed = !is_extinct(g, r);
                let b = by_key.entry(key).or_insert_with(|| Bucket {
                    q,
                    allowed: false,
                    members: Vec::new(),
                });
                b.q = b.q.min(q);
                b.allowed |= allowed;
                b.members.push(r);
            }
            by_key.into_values().collect()
        }
        None => hkl_cube(h_max)
            .map(|r| Bucket {
                q: q_of(&rl, r),
                allowed: !is_extinct(g, r),
                members: vec![r],
            })
            .collect(),
    };
    Ok(merge_buckets(buckets, window, wavelength, true))
}

/// Per-group precomputation for fast repeated peak enumeration at many lattices.
///
/// For keyed systems the absence pattern is folded into one entry per
/// position key; otherwise every reflection in the cube is kept.
#[derive(Debug, Clone)]
pub struct PeakEnumerator {
    system: CrystalSystem,
    h_max: u32,
    /// (representative reflection, allowed)
    entries: Vec<(Hkl, bool)>,
}

impl PeakEnumerator {
    pub fn new(g: &SpaceGroup, h_max: u32) -> Result<Self, ReflectionError> {
        if h_max < 1 {
            return Err(ReflectionError::InvalidHMax);
        }
        let system = g.system();
        let entries = match position_key(system, Hkl::new(1, 0, 0)) {
            Some(_) => {
                let mut by_key: std::collections::BTreeMap<(i64, i64), (Hkl, bool)> = Default::default();
                for r in hkl_cube(h_max) {
                    let key = position_key(system, r).unwrap();
                    let allowed = !is_extinct(g, r);
                    by_key.entry(key).and_modify(|e| e.1 |= allowed).or_insert((r, allowed));
                }
                by_key.into_values().collect()
            }
            None => hkl_cube(h_max).map(|r| (r, !is_extinct(g, r))).collect(),
        };
        Ok(PeakEnumerator { system, h_max, entries })
    }

    pub fn h_max(&self) -> u32 {
        self.h_max
    }

    /// Allowed positions as 2θ values in degrees, ascending.
    pub fn allowed_two_theta(
        &self,
        lat: &LatticeParams,
        window: &TwoThetaWindow,
        wavelength: f64,
    ) -> Result<Vec<f64>, ReflectionError> {
        Ok(self
            .positions(lat, window, wavelength)?
            .into_iter()
            .map(|p| p.two_theta)
            .collect())
    }

    /// Same positions as [`enumerate_peaks`] at this enumerator's `h_max`,
    /// without contributor lists.
    pub fn positions(
        &self,
        lat: &LatticeParams,
        window: &TwoThetaWindow,
        wavelength: f64,
    ) -> Result<Vec<PeakPosition>, ReflectionError> {
        lat.check_system(self.system)?;
        let rl = reciprocal(lat)?;
        let q_limit = q_max(window.max, wavelength) * (1.0 + 1e-9) + Q_MERGE_TOL;
        let buckets = self
            .entries
            .iter()
            .filter_map(|&(r, allowed)| {
                let q = q_of(&rl, r);
                (q <= q_limit).then_some(Bucket {
                    q,
                    allowed,
                    members: Vec::new(),
                })
            })
            .collect();
        Ok(merge_buckets(buckets, window, wavelength, false))
    }
}

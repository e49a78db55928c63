use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CrystalSystem, FreeParam};

/// Relative tolerance for fixed-angle and equal-length constraints.
const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("{system} lattices take {expected} free parameters, got {got}")]
    Arity {
        system: CrystalSystem,
        expected: usize,
        got: usize,
    },
    #[error("length {name} = {value} must be positive")]
    NonPositiveLength { name: &'static str, value: f64 },
    #[error("angle {name} = {value} must lie strictly between 0 and 180 degrees")]
    AngleRange { name: &'static str, value: f64 },
    #[error("cell is degenerate (normalized volume {0:e})")]
    Degenerate(f64),
    #[error("lattice violates {system} constraint: {detail}")]
    Constraint { system: CrystalSystem, detail: String },
}

/// Direct-cell parameters: lengths in Å, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LatticeParams {
    pub fn new(a: f64, b: f64, c: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self, LatticeError> {
        let lat = LatticeParams {
            a,
            b,
            c,
            alpha,
            beta,
            gamma,
        };
        lat.check()?;
        Ok(lat)
    }

    pub fn cubic(a: f64) -> Result<Self, LatticeError> {
        Self::new(a, a, a, 90.0, 90.0, 90.0)
    }

    pub fn tetragonal(a: f64, c: f64) -> Result<Self, LatticeError> {
        Self::new(a, a, c, 90.0, 90.0, 90.0)
    }

    pub fn hexagonal(a: f64, c: f64) -> Result<Self, LatticeError> {
        Self::new(a, a, c, 90.0, 90.0, 120.0)
    }

    fn check(&self) -> Result<(), LatticeError> {
        for (name, value) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(LatticeError::NonPositiveLength { name, value });
            }
        }
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(value > 0.0 && value < 180.0) {
                return Err(LatticeError::AngleRange { name, value });
            }
        }
        let v = self.volume_factor();
        if !(v > 1e-8) {
            return Err(LatticeError::Degenerate(v));
        }
        Ok(())
    }

    /// `V / (abc)`, the square root of the normalized metric determinant.
    pub fn volume_factor(&self) -> f64 {
        let [ca, cb, cg] = [self.alpha, self.beta, self.gamma].map(|x| x.to_radians().cos());
        let arg = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
        if arg > 0.0 {
            arg.sqrt()
        } else {
            0.0
        }
    }

    pub fn volume(&self) -> f64 {
        self.a * self.b * self.c * self.volume_factor()
    }

    /// Direct metric tensor `G_ij = a_i · a_j`.
    pub fn metric_tensor(&self) -> [[f64; 3]; 3] {
        let [ca, cb, cg] = [self.alpha, self.beta, self.gamma].map(|x| x.to_radians().cos());
        let (a, b, c) = (self.a, self.b, self.c);
        [
            [a * a, a * b * cg, a * c * cb],
            [a * b * cg, b * b, b * c * ca],
            [a * c * cb, b * c * ca, c * c],
        ]
    }

    pub fn get(&self, p: FreeParam) -> f64 {
        match p {
            FreeParam::A => self.a,
            FreeParam::B => self.b,
            FreeParam::C => self.c,
            FreeParam::Alpha => self.alpha,
            FreeParam::Beta => self.beta,
            FreeParam::Gamma => self.gamma,
        }
    }

    /// Checks the fixed equalities and angles of `system`.
    pub fn check_system(&self, system: CrystalSystem) -> Result<(), LatticeError> {
        let close = |x: f64, y: f64| (x - y).abs() <= CONSTRAINT_TOL * x.abs().max(y.abs()).max(1.0);
        let fail = |detail: &str| {
            Err(LatticeError::Constraint {
                system,
                detail: detail.to_string(),
            })
        };
        let right = |x: f64| close(x, 90.0);
        match system {
            CrystalSystem::Triclinic => {}
            CrystalSystem::Monoclinic => {
                if !(right(self.alpha) && right(self.gamma)) {
                    return fail("alpha = gamma = 90");
                }
            }
            CrystalSystem::Orthorhombic => {
                if !(right(self.alpha) && right(self.beta) && right(self.gamma)) {
                    return fail("alpha = beta = gamma = 90");
                }
            }
            CrystalSystem::Tetragonal => {
                if !close(self.a, self.b) {
                    return fail("a = b");
                }
                if !(right(self.alpha) && right(self.beta) && right(self.gamma)) {
                    return fail("alpha = beta = gamma = 90");
                }
            }
            CrystalSystem::Trigonal | CrystalSystem::Hexagonal => {
                if !close(self.a, self.b) {
                    return fail("a = b");
                }
                if !(right(self.alpha) && right(self.beta) && close(self.gamma, 120.0)) {
                    return fail("alpha = beta = 90, gamma = 120");
                }
            }
            CrystalSystem::Cubic => {
                if !(close(self.a, self.b) && close(self.b, self.c)) {
                    return fail("a = b = c");
                }
                if !(right(self.alpha) && right(self.beta) && right(self.gamma)) {
                    return fail("alpha = beta = gamma = 90");
                }
            }
        }
        Ok(())
    }
}

/// Expands the free parameters of `system` (in [`CrystalSystem::free_params`]
/// order) into a full cell.
pub fn lattice_from_free_params(system: CrystalSystem, values: &[f64]) -> Result<LatticeParams, LatticeError> {
    let free = system.free_params();
    if values.len() != free.len() {
        return Err(LatticeError::Arity {
            system,
            expected: free.len(),
            got: values.len(),
        });
    }
    let v = |p: FreeParam| free.iter().position(|&q| q == p).map(|i| values[i]);
    let lat = match system {
        CrystalSystem::Cubic => LatticeParams::new(values[0], values[0], values[0], 90.0, 90.0, 90.0),
        CrystalSystem::Tetragonal => LatticeParams::new(values[0], values[0], values[1], 90.0, 90.0, 90.0),
        CrystalSystem::Trigonal | CrystalSystem::Hexagonal => {
            LatticeParams::new(values[0], values[0], values[1], 90.0, 90.0, 120.0)
        }
        CrystalSystem::Orthorhombic => LatticeParams::new(values[0], values[1], values[2], 90.0, 90.0, 90.0),
        CrystalSystem::Monoclinic => {
            LatticeParams::new(values[0], values[1], values[2], 90.0, v(FreeParam::Beta).unwrap(), 90.0)
        }
        CrystalSystem::Triclinic => {
            LatticeParams::new(values[0], values[1], values[2], values[3], values[4], values[5])
        }
    }?;
    lat.check_system(system)?;
    Ok(lat)
}

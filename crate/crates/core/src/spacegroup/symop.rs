//! Symmetry operations and the coordinate-triplet grammar.
//!
//! Translations are held exactly as multiples of 1/12, which covers every
//! translation occurring in the 230 space groups.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Common denominator for all translation components.
pub const TRANSLATION_DENOMINATOR: i32 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymopError {
    #[error("expected three comma-separated terms, found {0}")]
    TermCount(usize),
    #[error("malformed term '{term}': {reason}")]
    Malformed { term: String, reason: String },
    #[error("coefficient of {var} in term '{term}' is {coefficient}, outside {{-1, 0, 1}}")]
    Coefficient { term: String, var: char, coefficient: i32 },
    #[error("constant in term '{term}' is not a multiple of 1/12")]
    Denominator { term: String },
    #[error("rotation part of '{0}' is singular or not unimodular")]
    Determinant(String),
}

/// A space-group operation mapping a fractional coordinate `x` to `R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymOp {
    rotation: [[i8; 3]; 3],
    /// Translation numerators over [`TRANSLATION_DENOMINATOR`], each in `0..12`.
    translation: [u8; 3],
}

fn reduce_twelfths(v: i32) -> u8 {
    v.rem_euclid(TRANSLATION_DENOMINATOR) as u8
}

impl SymOp {
    pub const IDENTITY: SymOp = SymOp {
        rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        translation: [0, 0, 0],
    };

    /// Builds an operation from a rotation and a translation given in twelfths.
    /// The translation is reduced modulo one lattice vector.
    pub fn new(rotation: [[i8; 3]; 3], translation_twelfths: [i32; 3]) -> Self {
        SymOp {
            rotation,
            translation: translation_twelfths.map(reduce_twelfths),
        }
    }

    pub fn rotation(&self) -> &[[i8; 3]; 3] {
        &self.rotation
    }

    /// Translation numerators over 12, reduced into `0..12`.
    pub fn translation_twelfths(&self) -> [u8; 3] {
        self.translation
    }

    /// Translation component `i` as a reduced fraction `(numerator, denominator)`.
    pub fn translation_fraction(&self, i: usize) -> (i32, i32) {
        reduced_fraction(self.translation[i] as i32, TRANSLATION_DENOMINATOR)
    }

    pub fn is_pure_translation(&self) -> bool {
        self.rotation == Self::IDENTITY.rotation
    }

    pub fn determinant(&self) -> i32 {
        det3(&self.rotation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    #[allow(clippy::needless_range_loop)]
    pub fn compose(&self, other: &SymOp) -> SymOp {
        let mut rotation = [[0i8; 3]; 3];
        let mut translation = [0i32; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = (0..3)
                    .map(|k| self.rotation[i][k] as i32 * other.rotation[k][j] as i32)
                    .sum::<i32>() as i8;
            }
            translation[i] = self.translation[i] as i32
                + (0..3)
                    .map(|k| self.rotation[i][k] as i32 * other.translation[k] as i32)
                    .sum::<i32>();
        }
        SymOp::new(rotation, translation)
    }

    /// Inverse modulo lattice translations. Requires a unimodular rotation.
    #[allow(clippy::needless_range_loop)]
    pub fn inverse(&self) -> SymOp {
        let r = &self.rotation;
        let det = self.determinant();
        debug_assert!(det == 1 || det == -1);
        let m = |i: usize, j: usize| r[i][j] as i32;
        // adjugate / det, with det = ±1
        let cof = |i: usize, j: usize| {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let (c, d) = ((j + 1) % 3, (j + 2) % 3);
            m(a, c) * m(b, d) - m(a, d) * m(b, c)
        };
        let mut inv = [[0i8; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = (cof(j, i) * det) as i8;
            }
        }
        let mut t = [0i32; 3];
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = -(0..3)
                .map(|k| inv[i][k] as i32 * self.translation[k] as i32)
                .sum::<i32>();
        }
        SymOp::new(inv, t)
    }

    /// Applies the operation to a fractional coordinate (no reduction).
    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|k| self.rotation[i][k] as f64 * x[k]).sum::<f64>()
                + self.translation[i] as f64 / TRANSLATION_DENOMINATOR as f64;
        }
        out
    }

    /// Formats as a canonical triplet such as `-y,x-y,z+1/3`.
    pub fn to_triplet(&self) -> String {
        self.to_string()
    }
}

fn det3(r: &[[i8; 3]; 3]) -> i32 {
    let m = |i: usize, j: usize| r[i][j] as i32;
    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn reduced_fraction(num: i32, den: i32) -> (i32, i32) {
    if num == 0 {
        return (0, 1);
    }
    let g = gcd(num, den);
    (num / g, den / g)
}

impl fmt::Display for SymOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const VARS: [char; 3] = ['x', 'y', 'z'];
        for i in 0..3 {
            if i > 0 {
                f.write_str(",")?;
            }
            let mut term = String::new();
            for (j, var) in VARS.iter().enumerate() {
                match self.rotation[i][j] {
                    0 => {}
                    1 => {
                        if !term.is_empty() {
                            term.push('+');
                        }
                        term.push(*var);
                    }
                    -1 => {
                        term.push('-');
                        term.push(*var);
                    }
                    _ => unreachable!("rotation entries are in {{-1, 0, 1}}"),
                }
            }
            let (num, den) = self.translation_fraction(i);
            if num != 0 {
                if !term.is_empty() {
                    term.push('+');
                }
                term.push_str(&format!("{num}/{den}"));
            }
            if term.is_empty() {
                term.push('0');
            }
            f.write_str(&term)?;
        }
        Ok(())
    }
}

impl FromStr for SymOp {
    type Err = SymopError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_symop(s)
    }
}

/// Parses a general-position triplet like `-y, x-y, z+1/3`.
pub fn parse_symop(text: &str) -> Result<SymOp, SymopError> {
    let terms: Vec<&str> = text.split(',').collect();
    if terms.len() != 3 {
        return Err(SymopError::TermCount(terms.len()));
    }
    let mut rotation = [[0i8; 3]; 3];
    let mut translation = [0i32; 3];
    for (i, term) in terms.iter().enumerate() {
        let (row, t) = parse_term(term.trim())?;
        rotation[i] = row;
        translation[i] = t;
    }
    let op = SymOp::new(rotation, translation);
    if !matches!(op.determinant(), 1 | -1) {
        return Err(SymopError::Determinant(text.trim().to_string()));
    }
    Ok(op)
}

/// Parses one term into a rotation row and a translation in twelfths.
fn parse_term(term: &str) -> Result<([i8; 3], i32), SymopError> {
    let malformed = |reason: &str| SymopError::Malformed {
        term: term.to_string(),
        reason: reason.to_string(),
    };
    let compact: String = term.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(malformed("empty term"));
    }

    let mut coeffs = [0i32; 3];
    let mut constant: Option<i32> = None;
    let chars: Vec<char> = compact.chars().collect();
    let mut pos = 0;
    while pos < chars.len() {
        let mut sign = 1;
        match chars[pos] {
            '+' => pos += 1,
            '-' => {
                sign = -1;
                pos += 1;
            }
            _ if pos > 0 => return Err(malformed("missing operator between atoms")),
            _ => {}
        }
        let start = pos;
        while pos < chars.len() && !matches!(chars[pos], '+' | '-') {
            pos += 1;
        }
        let atom: String = chars[start..pos].iter().collect();
        if atom.is_empty() {
            return Err(malformed("dangling sign"));
        }
        match atom.as_str() {
            "x" | "X" => coeffs[0] += sign,
            "y" | "Y" => coeffs[1] += sign,
            "z" | "Z" => coeffs[2] += sign,
            _ if atom.ends_with(['x', 'y', 'z', 'X', 'Y', 'Z']) => {
                let (num, var) = atom.split_at(atom.len() - 1);
                let num = num.trim_end_matches('*');
                let k: i32 = num.parse().map_err(|_| malformed("unrecognized coefficient"))?;
                let var = var.chars().next().unwrap().to_ascii_lowercase();
                let idx = (var as u8 - b'x') as usize;
                coeffs[idx] += sign * k;
            }
            _ => {
                if constant.is_some() {
                    return Err(malformed("more than one constant"));
                }
                let twelfths = parse_constant(&atom).ok_or_else(|| {
                    if atom.chars().all(|c| c.is_ascii_digit() || c == '/' || c == '.') {
                        SymopError::Denominator { term: term.to_string() }
                    } else {
                        malformed("unrecognized atom")
                    }
                })?;
                constant = Some(sign * twelfths);
            }
        }
    }

    let mut row = [0i8; 3];
    for (j, &c) in coeffs.iter().enumerate() {
        if !(-1..=1).contains(&c) {
            return Err(SymopError::Coefficient {
                term: term.to_string(),
                var: ['x', 'y', 'z'][j],
                coefficient: c,
            });
        }
        row[j] = c as i8;
    }
    Ok((row, constant.unwrap_or(0)))
}

/// Converts `n/m`, a decimal, or an integer into twelfths, if exact.
fn parse_constant(atom: &str) -> Option<i32> {
    let den = TRANSLATION_DENOMINATOR as i64;
    if let Some((n, m)) = atom.split_once('/') {
        let n: i64 = n.parse().ok()?;
        let m: i64 = m.parse().ok()?;
        if m <= 0 || (n * den) % m != 0 {
            return None;
        }
        return Some((n * den / m) as i32);
    }
    if let Some((int, frac)) = atom.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 9 {
            return None;
        }
        let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let scale = 10i64.pow(frac.len() as u32);
        let frac: i64 = frac.parse().ok()?;
        let num = int * scale + frac;
        if (num * den) % scale != 0 {
            return None;
        }
        return Some((num * den / scale) as i32);
    }
    let n: i64 = atom.parse().ok()?;
    Some((n * den) as i32)
}

//! Space-group identity, crystal systems and symmetry-operation tables.

mod lattice;
mod symop;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lattice::{lattice_from_free_params, LatticeError, LatticeParams};
pub use symop::{parse_symop, SymOp, SymopError, TRANSLATION_DENOMINATOR};

/// The general-position table shipped with the crate.
pub const SHIPPED_TABLE: &str = include_str!("../../data/spacegroups.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrystalSystem {
    Triclinic,
    Monoclinic,
    Orthorhombic,
    Tetragonal,
    Trigonal,
    Hexagonal,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreeParam {
    A,
    B,
    C,
    Alpha,
    Beta,
    Gamma,
}

impl FreeParam {
    pub fn is_angle(self) -> bool {
        matches!(self, FreeParam::Alpha | FreeParam::Beta | FreeParam::Gamma)
    }

    pub fn name(self) -> &'static str {
        match self {
            FreeParam::A => "a",
            FreeParam::B => "b",
            FreeParam::C => "c",
            FreeParam::Alpha => "alpha",
            FreeParam::Beta => "beta",
            FreeParam::Gamma => "gamma",
        }
    }
}

impl FromStr for FreeParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "a" => FreeParam::A,
            "b" => FreeParam::B,
            "c" => FreeParam::C,
            "alpha" => FreeParam::Alpha,
            "beta" => FreeParam::Beta,
            "gamma" => FreeParam::Gamma,
            other => return Err(format!("unknown lattice parameter '{other}'")),
        })
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl CrystalSystem {
    pub const ALL: [CrystalSystem; 7] = [
        CrystalSystem::Triclinic,
        CrystalSystem::Monoclinic,
        CrystalSystem::Orthorhombic,
        CrystalSystem::Tetragonal,
        CrystalSystem::Trigonal,
        CrystalSystem::Hexagonal,
        CrystalSystem::Cubic,
    ];

    pub fn sg_range(self) -> RangeInclusive<u16> {
        match self {
            CrystalSystem::Triclinic => 1..=2,
            CrystalSystem::Monoclinic => 3..=15,
            CrystalSystem::Orthorhombic => 16..=74,
            CrystalSystem::Tetragonal => 75..=142,
            CrystalSystem::Trigonal => 143..=167,
            CrystalSystem::Hexagonal => 168..=194,
            CrystalSystem::Cubic => 195..=230,
        }
    }

    pub fn of_number(number: u16) -> Option<CrystalSystem> {
        Self::ALL.into_iter().find(|s| s.sg_range().contains(&number))
    }

    /// Independently varying cell parameters, in the order expected by
    /// [`lattice_from_free_params`]. Monoclinic uses the unique-b setting.
    pub fn free_params(self) -> &'static [FreeParam] {
        use FreeParam::*;
        match self {
            CrystalSystem::Triclinic => &[A, B, C, Alpha, Beta, Gamma],
            CrystalSystem::Monoclinic => &[A, B, C, Beta],
            CrystalSystem::Orthorhombic => &[A, B, C],
            CrystalSystem::Tetragonal | CrystalSystem::Trigonal | CrystalSystem::Hexagonal => &[A, C],
            CrystalSystem::Cubic => &[A],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CrystalSystem::Triclinic => "triclinic",
            CrystalSystem::Monoclinic => "monoclinic",
            CrystalSystem::Orthorhombic => "orthorhombic",
            CrystalSystem::Tetragonal => "tetragonal",
            CrystalSystem::Trigonal => "trigonal",
            CrystalSystem::Hexagonal => "hexagonal",
            CrystalSystem::Cubic => "cubic",
        }
    }
}

impl fmt::Display for CrystalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Crystal-system pools used for dataset recipes and extinction classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "cubic")]
    Cubic,
    #[serde(rename = "tetragonal")]
    Tetragonal,
    #[serde(rename = "trigonal+hexagonal")]
    TrigonalHexagonal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Cubic, Family::Tetragonal, Family::TrigonalHexagonal];

    pub fn sg_range(self) -> RangeInclusive<u16> {
        match self {
            Family::Cubic => 195..=230,
            Family::Tetragonal => 75..=142,
            Family::TrigonalHexagonal => 143..=194,
        }
    }

    pub fn group_count(self) -> usize {
        self.sg_range().len()
    }

    pub fn contains(self, number: u16) -> bool {
        self.sg_range().contains(&number)
    }

    pub fn of_number(number: u16) -> Option<Family> {
        Self::ALL.into_iter().find(|f| f.contains(number))
    }

    /// Lattice parameterization shared by every member.
    pub fn lattice_system(self) -> CrystalSystem {
        match self {
            Family::Cubic => CrystalSystem::Cubic,
            Family::Tetragonal => CrystalSystem::Tetragonal,
            Family::TrigonalHexagonal => CrystalSystem::Hexagonal,
        }
    }

    pub fn free_params(self) -> &'static [FreeParam] {
        self.lattice_system().free_params()
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Cubic => "cubic",
            Family::Tetragonal => "tetragonal",
            Family::TrigonalHexagonal => "trigonal+hexagonal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" => Ok(Family::Cubic),
            "tetragonal" => Ok(Family::Tetragonal),
            "trigonal+hexagonal" | "trigonal-hexagonal" | "tri/hexagonal" | "hexagonal" | "trigonal" => {
                Ok(Family::TrigonalHexagonal)
            }
            other => Err(format!(
                "unknown family '{other}' (expected cubic, tetragonal or trigonal+hexagonal)"
            )),
        }
    }
}

/// Lattice centering read from the first letter of the Hermann–Mauguin symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    P,
    A,
    B,
    C,
    I,
    F,
    R,
}

impl Centering {
    /// Number of lattice points per conventional cell.
    pub fn multiplicity(self) -> usize {
        match self {
            Centering::P => 1,
            Centering::A | Centering::B | Centering::C | Centering::I => 2,
            Centering::R => 3,
            Centering::F => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceGroup {
    number: u16,
    symbol: String,
    system: CrystalSystem,
    ops: Vec<SymOp>,
}

impl SpaceGroup {
    /// Assembles a group without checking the group axioms; see [`validate_group`].
    pub fn new(number: u16, symbol: impl Into<String>, ops: Vec<SymOp>) -> Result<Self, TableError> {
        let system = CrystalSystem::of_number(number).ok_or(TableError::Number {
            line: 0,
            text: number.to_string(),
        })?;
        Ok(SpaceGroup {
            number,
            symbol: symbol.into(),
            system,
            ops,
        })
    }

    pub fn number(&self) -> u16 {
        self.number
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn system(&self) -> CrystalSystem {
        self.system
    }

    pub fn ops(&self) -> &[SymOp] {
        &self.ops
    }

    pub fn family(&self) -> Option<Family> {
        Family::of_number(self.number)
    }

    pub fn centering(&self) -> Option<Centering> {
        Some(match self.symbol.chars().next()? {
            'P' => Centering::P,
            'A' => Centering::A,
            'B' => Centering::B,
            'C' => Centering::C,
            'I' => Centering::I,
            'F' => Centering::F,
            'R' => Centering::R,
            _ => return None,
        })
    }

    /// Number of distinct rotation parts, i.e. the point-group order.
    pub fn point_group_order(&self) -> usize {
        self.ops.iter().map(|op| *op.rotation()).collect::<HashSet<_>>().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupViolation {
    #[error("identity operation missing")]
    MissingIdentity,
    #[error("operation {0} listed twice")]
    Duplicate(SymOp),
    #[error("{a} ∘ {b} is not in the group")]
    NotClosed { a: SymOp, b: SymOp },
    #[error("inverse of {0} is not in the group")]
    MissingInverse(SymOp),
}

/// Checks identity membership, uniqueness, closure and inverses modulo ℤ³.
pub fn validate_group(g: &SpaceGroup) -> Result<(), GroupViolation> {
    let mut set = HashSet::with_capacity(g.ops.len());
    for op in &g.ops {
        if !set.insert(*op) {
            return Err(GroupViolation::Duplicate(*op));
        }
    }
    if !set.contains(&SymOp::IDENTITY) {
        return Err(GroupViolation::MissingIdentity);
    }
    for a in &g.ops {
        for b in &g.ops {
            if !set.contains(&a.compose(b)) {
                return Err(GroupViolation::NotClosed { a: *a, b: *b });
            }
        }
    }
    for a in &g.ops {
        if !set.contains(&a.inverse()) {
            return Err(GroupViolation::MissingInverse(*a));
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: invalid space-group number '{text}'")]
    Number { line: usize, text: String },
    #[error("line {line}: group header '{text}' lacks a symbol")]
    Header { line: usize, text: String },
    #[error("line {line}: group {group}: {source}")]
    Symop {
        line: usize,
        group: u16,
        #[source]
        source: SymopError,
    },
    #[error("line {line}: triplet outside any group block")]
    Orphan { line: usize },
    #[error("group {0} is listed more than once")]
    Duplicate(u16),
    #[error("group {group} failed validation: {violation}")]
    Invalid { group: u16, violation: GroupViolation },
    #[error("group {0} has no operations")]
    Empty(u16),
    #[error("reading space-group table: {0}")]
    Io(#[from] std::io::Error),
}

impl TableError {
    /// Space-group number the error refers to, when one is known.
    pub fn group(&self) -> Option<u16> {
        match self {
            TableError::Symop { group, .. } | TableError::Invalid { group, .. } => Some(*group),
            TableError::Duplicate(g) | TableError::Empty(g) => Some(*g),
            _ => None,
        }
    }
}

/// Immutable registry of validated space groups keyed by number.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    groups: BTreeMap<u16, SpaceGroup>,
}

impl Registry {
    /// Parses the table shipped with the crate.
    pub fn shipped() -> Result<Self, TableError> {
        load_spacegroup_table(SHIPPED_TABLE)
    }

    pub fn from_path(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path)?;
        load_spacegroup_table(&text)
    }

    pub fn get(&self, number: u16) -> Option<&SpaceGroup> {
        self.groups.get(&number)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpaceGroup> {
        self.groups.values()
    }

    /// Groups of `family` in number order, or the list of missing numbers.
    pub fn family_groups(&self, family: Family) -> Result<Vec<&SpaceGroup>, Vec<u16>> {
        let missing: Vec<u16> = family.sg_range().filter(|n| !self.groups.contains_key(n)).collect();
        if !missing.is_empty() {
            return Err(missing);
        }
        Ok(family.sg_range().map(|n| &self.groups[&n]).collect())
    }
}

/// Parses a space-group table and validates every group in it.
pub fn load_spacegroup_table(text: &str) -> Result<Registry, TableError> {
    struct Block {
        number: u16,
        symbol: String,
        ops: Vec<SymOp>,
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut open = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // comment-only lines do not terminate a block
            if raw.trim().is_empty() {
                open = false;
            }
            continue;
        }
        if !open {
            let (num, symbol) = line.split_once(char::is_whitespace).ok_or_else(|| TableError::Header {
                line: line_no,
                text: line.to_string(),
            })?;
            let number: u16 = num.parse().map_err(|_| TableError::Number {
                line: line_no,
                text: num.to_string(),
            })?;
            if !(1..=230).contains(&number) {
                return Err(TableError::Number {
                    line: line_no,
                    text: num.to_string(),
                });
            }
            blocks.push(Block {
                number,
                symbol: symbol.trim().to_string(),
                ops: Vec::new(),
            });
            open = true;
            continue;
        }
        let block = blocks.last_mut().ok_or(TableError::Orphan { line: line_no })?;
        let op = parse_symop(line).map_err(|source| TableError::Symop {
            line: line_no,
            group: block.number,
            source,
        })?;
        block.ops.push(op);
    }

    let mut groups = BTreeMap::new();
    for block in blocks {
        if block.ops.is_empty() {
            return Err(TableError::Empty(block.number));
        }
        let g = SpaceGroup::new(block.number, block.symbol, block.ops)?;
        validate_group(&g).map_err(|violation| TableError::Invalid {
            group: g.number,
            violation,
        })?;
        if groups.insert(g.number, g).is_some() {
            return Err(TableError::Duplicate(block.number));
        }
    }
    Ok(Registry { groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> Registry {
        Registry::shipped().unwrap()
    }

    fn block(registry_text: &str, number: u16) -> String {
        let mut out = String::new();
        let mut inside = false;
        for line in registry_text.lines() {
            if line.starts_with(&format!("{number} ")) {
                inside = true;
            }
            if inside {
                if line.trim().is_empty() {
                    break;
                }
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }

    #[test]
    fn system_ranges_partition_all_numbers() {
        for n in 1..=230u16 {
            let hits = CrystalSystem::ALL.iter().filter(|s| s.sg_range().contains(&n)).count();
            assert_eq!(hits, 1, "group {n}");
        }
    }

    #[test]
    fn shipped_table_covers_all_groups() {
        let reg = shipped();
        assert_eq!(reg.len(), 230);
        assert_eq!(reg.get(229).unwrap().ops().len(), 96);
        assert_eq!(reg.get(225).unwrap().ops().len(), 192);
        assert_eq!(reg.get(229).unwrap().symbol(), "Im-3m");
    }

    #[test]
    fn cubic_block_subset() {
        let text: String = (195..=230).map(|n| block(SHIPPED_TABLE, n) + "\n").collect();
        let reg = load_spacegroup_table(&text).unwrap();
        assert_eq!(reg.len(), 36);
        assert!(reg.iter().all(|g| g.system() == CrystalSystem::Cubic));
    }

    #[test]
    fn identity_only_group_is_valid() {
        let g = SpaceGroup::new(1, "P1", vec![SymOp::IDENTITY]).unwrap();
        assert_eq!(validate_group(&g), Ok(()));
    }

    #[test]
    fn deleting_an_op_breaks_closure() {
        let reg = shipped();
        let fm3m = reg.get(225).unwrap();
        assert_eq!(validate_group(fm3m), Ok(()));
        let mut ops = fm3m.ops().to_vec();
        ops.remove(37);
        let broken = SpaceGroup::new(225, "Fm-3m", ops).unwrap();
        assert!(matches!(validate_group(&broken), Err(GroupViolation::NotClosed { .. })));
    }

    #[test]
    fn non_closed_block_is_a_load_error() {
        let text = "75 P4\nx,y,z\n-y,x,z\n";
        let err = load_spacegroup_table(text).unwrap_err();
        assert_eq!(err.group(), Some(75));
        assert!(matches!(err, TableError::Invalid { .. }));
    }

    #[test]
    fn duplicate_group_numbers_rejected() {
        let text = "1 P1\nx,y,z\n\n1 P1\nx,y,z\n";
        assert!(matches!(load_spacegroup_table(text), Err(TableError::Duplicate(1))));
    }

    #[test]
    fn bad_triplet_names_group_and_line() {
        let text = "# header\n2 P-1\nx,y,z\n-x,-y,-2z\n";
        match load_spacegroup_table(text) {
            Err(TableError::Symop { line, group, .. }) => {
                assert_eq!((line, group), (4, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_are_ignored() {
        let text = "# a comment\n2 P-1   # inversion\nx,y,z\n# inline comment line\n-x,-y,-z\n";
        let reg = load_spacegroup_table(text).unwrap();
        assert_eq!(reg.get(2).unwrap().ops().len(), 2);
    }

    #[test]
    fn missing_family_groups_reported() {
        let text = "195 P23\nx,y,z\n";
        let reg = load_spacegroup_table(text);
        // a lone identity is a valid (if incomplete) group
        let reg = reg.unwrap();
        let missing = reg.family_groups(Family::Cubic).unwrap_err();
        assert_eq!(missing.len(), 35);
        assert_eq!(missing[0], 196);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Cubic".parse::<Family>().unwrap(), Family::Cubic);
        assert_eq!(
            "trigonal+hexagonal".parse::<Family>().unwrap(),
            Family::TrigonalHexagonal
        );
        assert!("orthorhombic".parse::<Family>().is_err());
    }
}

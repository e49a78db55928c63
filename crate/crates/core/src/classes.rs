//! Extinction-equivalence classes and the top-k accuracy ceiling they imply.
//!
//! Two space groups are indistinguishable from peak positions when the same
//! powder positions are present for both. Positions are identified by exact
//! integer keys (see [`position_key`]) so that presence never depends on a
//! particular lattice.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reflection::{hkl_cube, is_extinct, position_key};
use crate::spacegroup::{Family, Registry, SpaceGroup};

pub const MIN_FINGERPRINT_H_MAX: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassError {
    #[error("space group {0} is not in a supported family (cubic, tetragonal, trigonal+hexagonal)")]
    UnsupportedGroup(u16),
    #[error("h_max must be at least {MIN_FINGERPRINT_H_MAX}, got {0}")]
    HMaxTooSmall(u32),
    #[error("registry is missing {family} groups {missing:?}")]
    MissingGroups { family: Family, missing: Vec<u16> },
    #[error("label {label} does not belong to the {family} family")]
    ForeignLabel { label: u16, family: Family },
}

/// Presence of every powder position key for one group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub family: Family,
    pub cells: Vec<((i64, i64), bool)>,
}

impl Fingerprint {
    pub fn is_present(&self, key: (i64, i64)) -> Option<bool> {
        self.cells
            .binary_search_by(|(k, _)| k.cmp(&key))
            .ok()
            .map(|i| self.cells[i].1)
    }

    pub fn absent_keys(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.cells.iter().filter(|(_, p)| !p).map(|(k, _)| *k)
    }
}

pub fn fingerprint(g: &SpaceGroup, h_max: u32) -> Result<Fingerprint, ClassError> {
    let family = g.family().ok_or(ClassError::UnsupportedGroup(g.number()))?;
    if h_max < MIN_FINGERPRINT_H_MAX {
        return Err(ClassError::HMaxTooSmall(h_max));
    }
    let mut cells: BTreeMap<(i64, i64), bool> = BTreeMap::new();
    for r in hkl_cube(h_max) {
        let key = position_key(g.system(), r).expect("supported families have position keys");
        let present = !is_extinct(g, r);
        *cells.entry(key).or_insert(false) |= present;
    }
    Ok(Fingerprint {
        family,
        cells: cells.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtinctionClass {
    pub members: Vec<u16>,
    pub fingerprint: Fingerprint,
}

impl ExtinctionClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub family: Family,
    pub classes: Vec<ExtinctionClass>,
}

impl Partition {
    pub fn group_count(&self) -> usize {
        self.classes.iter().map(ExtinctionClass::len).sum()
    }

    pub fn max_class_size(&self) -> usize {
        self.classes.iter().map(ExtinctionClass::len).max().unwrap_or(0)
    }

    pub fn class_of(&self, number: u16) -> Option<usize> {
        self.classes.iter().position(|c| c.members.contains(&number))
    }

    /// Member lists only, for comparing partitions.
    pub fn member_sets(&self) -> Vec<Vec<u16>> {
        self.classes.iter().map(|c| c.members.clone()).collect()
    }
}

/// Groups the family's space groups by identical fingerprints. Classes are
/// ordered by their smallest member.
pub fn compute_classes(family: Family, registry: &Registry, h_max: u32) -> Result<Partition, ClassError> {
    if h_max < MIN_FINGERPRINT_H_MAX {
        return Err(ClassError::HMaxTooSmall(h_max));
    }
    let groups = registry
        .family_groups(family)
        .map_err(|missing| ClassError::MissingGroups { family, missing })?;
    let prints: Vec<(u16, Fingerprint)> = groups
        .par_iter()
        .map(|g| fingerprint(g, h_max).map(|f| (g.number(), f)))
        .collect::<Result<_, _>>()?;

    let mut classes: Vec<ExtinctionClass> = Vec::new();
    for (number, print) in prints {
        match classes.iter_mut().find(|c| c.fingerprint == print) {
            Some(c) => c.members.push(number),
            None => classes.push(ExtinctionClass {
                members: vec![number],
                fingerprint: print,
            }),
        }
    }
    // groups arrive in ascending order, so members are sorted already
    classes.sort_by_key(|c| c.members[0]);
    Ok(Partition { family, classes })
}

/// Best achievable top-k accuracy when members of a class are
/// indistinguishable: `Σ min(k, nᵢ) / Σ nᵢ`.
pub fn theoretical_topk(p: &Partition, k: usize) -> f64 {
    let total = p.group_count();
    if total == 0 {
        return 0.0;
    }
    let hits: usize = p.classes.iter().map(|c| c.len().min(k)).sum();
    hits as f64 / total as f64
}

/// Maps space-group labels to class indices of `p`.
pub fn relabel(labels: &[u16], p: &Partition) -> Result<Vec<usize>, ClassError> {
    let lookup: BTreeMap<u16, usize> = p
        .classes
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.members.iter().map(move |&m| (m, i)))
        .collect();
    labels
        .iter()
        .map(|&label| {
            lookup.get(&label).copied().ok_or(ClassError::ForeignLabel {
                label,
                family: p.family,
            })
        })
        .collect()
}

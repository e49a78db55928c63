//! Synthetic powder diffraction datasets consistent with crystallographic
//! extinction laws, extinction-class analysis, and baseline evaluation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod classes;
pub mod eval;
pub mod io;
pub mod reflection;
pub mod spacegroup;
pub mod synth;

pub use spacegroup::{Family, Registry, SpaceGroup};

//! Labeled dataset construction: uniform lattice meshes per space group,
//! deterministic stratified splits, and ingestion of externally computed
//! line patterns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{
    DataSource, DatasetMetadata, DatasetWriter, GroupCounts, Header, IoError, SampleInfo, SplitRole, FORMAT_VERSION,
};
use crate::reflection::{q_max, two_theta, PeakEnumerator, ReflectionError};
use crate::spacegroup::{lattice_from_free_params, Family, FreeParam, LatticeError, Registry};
use crate::synth::{
    line_pattern_from_peaks, make_line_pattern, render, sample_rng, PatternConfig, Provenance, RenderedPattern,
    SynthError,
};

/// Work items rendered in parallel before being written in order.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Config(#[from] SynthError),
    #[error("registry is missing groups {0:?}")]
    MissingGroups(Vec<u16>),
    #[error("no override range given for space groups {0:?}")]
    MissingOverride(Vec<u16>),
    #[error("grid produces no lattice points")]
    EmptyGrid,
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("creating output directory {path}: {source}")]
    OutputDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no records")]
    EmptyInput,
    #[error("metadata has no lattice provenance to histogram")]
    NoLatticeProvenance,
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
}

/// Arithmetic sequence `min, min + step, … <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, BuildError> {
        let r = ParamRange { min, max, step };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), BuildError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(BuildError::Grid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(BuildError::Grid(format!(
                "range needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.value(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub param: FreeParam,
    #[serde(flatten)]
    pub range: ParamRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: Family,
    pub ranges: BTreeMap<FreeParam, ParamRange>,
    pub patterns_per_lattice: u32,
    /// Per-space-group replacements for some or all ranges.
    #[serde(default)]
    pub overrides: BTreeMap<u16, BTreeMap<FreeParam, ParamRange>>,
}

impl GridSpec {
    /// Every free parameter of `family` spans `range`.
    pub fn uniform(family: Family, range: ParamRange, patterns_per_lattice: u32) -> Self {
        GridSpec {
            family,
            ranges: family.free_params().iter().map(|&p| (p, range)).collect(),
            patterns_per_lattice,
            overrides: BTreeMap::new(),
        }
    }

    /// Defaults: [5, 15] Å on every free length, step 0.05 Å for cubic and
    /// 0.25 Å for the two-parameter families.
    pub fn default_for(family: Family) -> Self {
        let step = match family {
            Family::Cubic => 0.05,
            Family::Tetragonal | Family::TrigonalHexagonal => 0.25,
        };
        Self::uniform(
            family,
            ParamRange {
                min: 5.0,
                max: 15.0,
                step,
            },
            1,
        )
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if self.patterns_per_lattice < 1 {
            return Err(BuildError::Grid("patterns_per_lattice must be at least 1".into()));
        }
        let free = self.family.free_params();
        for p in free {
            self.ranges
                .get(p)
                .ok_or_else(|| BuildError::Grid(format!("no range for parameter {p}")))?
                .validate()?;
        }
        if let Some(p) = self.ranges.keys().find(|p| !free.contains(p)) {
            return Err(BuildError::Grid(format!(
                "{p} is not a free parameter of {}",
                self.family
            )));
        }
        for (sg, ranges) in &self.overrides {
            if !self.family.contains(*sg) {
                return Err(BuildError::Grid(format!("override for {sg} outside {}", self.family)));
            }
            for (p, r) in ranges {
                if !free.contains(p) {
                    return Err(BuildError::Grid(format!(
                        "{p} is not a free parameter of {}",
                        self.family
                    )));
                }
                r.validate()?;
            }
        }
        Ok(())
    }

    /// Axes for `sg` in the family's free-parameter order.
    pub fn axes_for(&self, sg: u16) -> Vec<ParamAxis> {
        self.family
            .free_params()
            .iter()
            .map(|&param| {
                let range = self
                    .overrides
                    .get(&sg)
                    .and_then(|o| o.get(&param))
                    .or_else(|| self.ranges.get(&param))
                    .copied()
                    .expect("validated grid has every free parameter");
                ParamAxis { param, range }
            })
            .collect()
    }

    pub fn lattice_count(&self, sg: u16) -> usize {
        self.axes_for(sg).iter().map(|a| a.range.len()).product()
    }

    /// Cartesian product of the axes, first parameter varying slowest.
    pub fn lattice_points(&self, sg: u16) -> Vec<Vec<f64>> {
        let axes = self.axes_for(sg);
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.range.values().map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn resolve(&self) -> ResolvedGrid {
        ResolvedGrid {
            patterns_per_lattice: self.patterns_per_lattice,
            per_group: self.family.sg_range().map(|sg| (sg, self.axes_for(sg))).collect(),
        }
    }
}

/// The effective mesh of every group, as recorded in metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGrid {
    pub patterns_per_lattice: u32,
    pub per_group: BTreeMap<u16, Vec<ParamAxis>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitUnit {
    /// Intensity replicates are split; lattices are shared by train and test.
    Replicate,
    /// Whole lattice points go to one side.
    LatticePoint,
}

impl std::str::FromStr for SplitUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replicate" => Ok(SplitUnit::Replicate),
            "lattice-point" | "lattice" => Ok(SplitUnit::LatticePoint),
            other => Err(format!(
                "unknown split unit '{other}' (expected replicate or lattice-point)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_parts: u32,
    pub test_parts: u32,
    pub unit: SplitUnit,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_parts: u32, test_parts: u32, unit: SplitUnit, seed: u64) -> Result<Self, BuildError> {
        let s = SplitSpec {
            train_parts,
            test_parts,
            unit,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if self.train_parts == 0 || self.test_parts == 0 {
            return Err(BuildError::Split(format!(
                "ratio parts must be positive, got {}:{}",
                self.train_parts, self.test_parts
            )));
        }
        Ok(())
    }

    fn parts(&self) -> u64 {
        (self.train_parts + self.test_parts) as u64
    }

    fn rng(&self, label: u16, unit: u64) -> ChaCha8Rng {
        sample_rng(self.seed ^ 0x5eed_5eed_5eed_5eed, label, unit, u32::MAX)
    }

    /// Number of test units out of `n`, rounded to nearest.
    fn test_count(&self, n: usize) -> usize {
        ((n as u64 * self.test_parts as u64 * 2 + self.parts()) / (2 * self.parts())) as usize
    }

    /// Units of one label chosen for the test side.
    fn test_units(&self, label: u16, n: usize) -> BTreeSet<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng(label, u64::MAX));
        idx.truncate(self.test_count(n));
        idx.into_iter().collect()
    }
}

/// Per-label running allocation for replicate splits: after `j` samples,
/// `floor((j + phase)·test / parts)` of them are on the test side.
struct ReplicateQuota {
    emitted: u64,
    phase: u64,
}

impl ReplicateQuota {
    fn new(split: &SplitSpec, label: u16) -> Self {
        ReplicateQuota {
            emitted: 0,
            phase: split.rng(label, u64::MAX - 1).random_range(0..split.parts()),
        }
    }

    /// Test flags for the next `n` replicates of one lattice point.
    fn take(&mut self, split: &SplitSpec, label: u16, lattice_index: u64, n: usize) -> Vec<bool> {
        let target = |j: u64| (j + self.phase) * split.test_parts as u64 / split.parts();
        let n_test = (target(self.emitted + n as u64) - target(self.emitted)) as usize;
        self.emitted += n as u64;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut split.rng(label, lattice_index));
        let mut flags = vec![false; n];
        for &i in order.iter().take(n_test) {
            flags[i] = true;
        }
        flags
    }
}

/// Summary of a written train/test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub train: Header,
    pub test: Header,
    pub counts: BTreeMap<u16, GroupCounts>,
}

impl BuildOutput {
    pub fn total(&self) -> u64 {
        self.train.n_samples + self.test.n_samples
    }
}

/// Streams samples into `train.ulbd` / `test.ulbd` in a fixed order.
struct SplitSink {
    train: DatasetWriter,
    test: DatasetWriter,
    train_info: Vec<SampleInfo>,
    test_info: Vec<SampleInfo>,
    next_index: u64,
    counts: BTreeMap<u16, GroupCounts>,
}

impl SplitSink {
    fn create(out_dir: &Path, cfg: &PatternConfig) -> Result<Self, BuildError> {
        std::fs::create_dir_all(out_dir).map_err(|source| BuildError::OutputDir {
            path: out_dir.display().to_string(),
            source,
        })?;
        let open = |role: SplitRole| {
            DatasetWriter::create(
                &out_dir.join(format!("{}.ulbd", role.stem())),
                cfg.n_points,
                cfg.two_theta_min,
                cfg.two_theta_max,
            )
        };
        Ok(SplitSink {
            train: open(SplitRole::Train)?,
            test: open(SplitRole::Test)?,
            train_info: Vec::new(),
            test_info: Vec::new(),
            next_index: 0,
            counts: BTreeMap::new(),
        })
    }

    fn push(&mut self, pattern: RenderedPattern, to_test: bool) -> Result<(), BuildError> {
        let info = SampleInfo {
            index: self.next_index,
            label: pattern.label,
            provenance: pattern.provenance,
        };
        self.next_index += 1;
        self.counts.entry(pattern.label).or_default().samples_total += 1;
        if to_test {
            self.test.push(pattern.label, &pattern.samples)?;
            self.test_info.push(info);
        } else {
            self.train.push(pattern.label, &pattern.samples)?;
            self.train_info.push(info);
        }
        Ok(())
    }

    fn finish(
        self,
        family: Option<Family>,
        source: DataSource,
        cfg: &PatternConfig,
        grid: Option<ResolvedGrid>,
        split: &SplitSpec,
    ) -> Result<BuildOutput, BuildError> {
        let meta = |role: SplitRole, samples: Vec<SampleInfo>| {
            let mut group_counts = self.counts.clone();
            for c in group_counts.values_mut() {
                c.samples_in_file = 0;
            }
            for s in &samples {
                group_counts.entry(s.label).or_default().samples_in_file += 1;
            }
            DatasetMetadata {
                format_version: FORMAT_VERSION,
                role,
                source: source.clone(),
                family,
                pattern: cfg.clone(),
                grid: grid.clone(),
                split: *split,
                group_counts,
                n_samples: samples.len() as u64,
                samples,
            }
        };
        let train_meta = meta(SplitRole::Train, self.train_info);
        let test_meta = meta(SplitRole::Test, self.test_info);
        let counts = train_meta
            .group_counts
            .iter()
            .map(|(k, v)| {
                let mut c = v.clone();
                c.samples_in_file = 0;
                (*k, c)
            })
            .collect();
        let train = self.train.finish(&train_meta)?;
        let test = self.test.finish(&test_meta)?;
        Ok(BuildOutput { train, test, counts })
    }
}

fn index_bound(cfg: &PatternConfig, axes: &[ParamAxis]) -> u32 {
    if let Some(h) = cfg.h_max {
        return h;
    }
    let longest = axes
        .iter()
        .filter(|a| !a.param.is_angle())
        .map(|a| a.range.value(a.range.len() - 1))
        .fold(0.0, f64::max);
    ((longest * q_max(cfg.two_theta_max, cfg.wavelength).sqrt()).floor() as u32).max(1)
}

/// Uniform-lattice dataset for one family, written as `train.ulbd` and
/// `test.ulbd` (plus sidecars) under `out_dir`.
pub fn build_ulbd(
    registry: &Registry,
    grid: &GridSpec,
    cfg: &PatternConfig,
    split: &SplitSpec,
    out_dir: &Path,
) -> Result<BuildOutput, BuildError> {
    cfg.validate()?;
    grid.validate()?;
    split.validate()?;
    let family = grid.family;
    let groups = registry.family_groups(family).map_err(BuildError::MissingGroups)?;

    let window = cfg.window();
    let enumerators: Vec<PeakEnumerator> = groups
        .par_iter()
        .map(|g| PeakEnumerator::new(g, index_bound(cfg, &grid.axes_for(g.number()))))
        .collect::<Result<_, _>>()?;
    let points: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| grid.lattice_points(g.number())).collect();
    let work: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(gi, pts)| (0..pts.len()).map(move |li| (gi, li)))
        .collect();
    if work.is_empty() {
        return Err(BuildError::EmptyGrid);
    }

    let system = family.lattice_system();
    let ppl = grid.patterns_per_lattice;
    let render_item = |&(gi, li): &(usize, usize)| -> Result<Option<Vec<RenderedPattern>>, BuildError> {
        let label = groups[gi].number();
        let params = &points[gi][li];
        let lat = lattice_from_free_params(system, params)?;
        let positions = enumerators[gi].allowed_two_theta(&lat, &window, cfg.wavelength)?;
        if positions.is_empty() {
            return Ok(None);
        }
        (0..ppl)
            .map(|rep| {
                let prov = Provenance::Lattice {
                    params: params.clone(),
                    lattice_index: li as u64,
                    replicate: rep,
                };
                let mut rng = sample_rng(cfg.seed, label, li as u64, rep);
                let lp = make_line_pattern(&positions, label, prov, cfg, &mut rng)?;
                Ok(render(&lp, cfg))
            })
            .collect::<Result<Vec<_>, BuildError>>()
            .map(Some)
    };

    let mut sink = SplitSink::create(out_dir, cfg)?;
    for g in &groups {
        let c = sink.counts.entry(g.number()).or_default();
        c.units = grid.lattice_count(g.number()) as u64;
    }
    let mut quotas: BTreeMap<u16, ReplicateQuota> = BTreeMap::new();
    let test_lattices: BTreeMap<u16, BTreeSet<usize>> = match split.unit {
        SplitUnit::LatticePoint => groups
            .iter()
            .zip(&points)
            .map(|(g, pts)| (g.number(), split.test_units(g.number(), pts.len())))
            .collect(),
        SplitUnit::Replicate => BTreeMap::new(),
    };

    for chunk in work.chunks(CHUNK) {
        let rendered: Vec<_> = chunk.par_iter().map(render_item).collect();
        for (&(gi, li), result) in chunk.iter().zip(rendered) {
            let label = groups[gi].number();
            let Some(patterns) = result? else {
                log::debug!("space group {label}: lattice point {li} has no allowed peak in the window, skipped");
                sink.counts.entry(label).or_default().skipped += 1;
                continue;
            };
            let flags = match split.unit {
                SplitUnit::Replicate => quotas
                    .entry(label)
                    .or_insert_with(|| ReplicateQuota::new(split, label))
                    .take(split, label, li as u64, patterns.len()),
                SplitUnit::LatticePoint => vec![test_lattices[&label].contains(&li); patterns.len()],
            };
            for (p, to_test) in patterns.into_iter().zip(flags) {
                sink.push(p, to_test)?;
            }
        }
    }
    let skipped: u64 = sink.counts.values().map(|c| c.skipped).sum();
    if skipped > 0 {
        log::info!("skipped {skipped} lattice points with no allowed peak in the window");
    }
    sink.finish(Some(family), DataSource::Ulbd, cfg, Some(grid.resolve()), split)
}

/// Like [`build_ulbd`] but each group uses its own ranges; every group of the
/// family must have an override entry.
pub fn build_imbalanced(
    registry: &Registry,
    base: &GridSpec,
    per_group: &BTreeMap<u16, BTreeMap<FreeParam, ParamRange>>,
    cfg: &PatternConfig,
    split: &SplitSpec,
    out_dir: &Path,
) -> Result<BuildOutput, BuildError> {
    let missing: Vec<u16> = base
        .family
        .sg_range()
        .filter(|sg| !per_group.contains_key(sg))
        .collect();
    if !missing.is_empty() {
        return Err(BuildError::MissingOverride(missing));
    }
    let mut grid = base.clone();
    grid.overrides = per_group.clone();
    build_ulbd(registry, &grid, cfg, split, out_dir)
}

/// Parses `sg_number param min max step` lines; `#` starts a comment.
pub fn parse_override_table(text: &str) -> Result<BTreeMap<u16, BTreeMap<FreeParam, ParamRange>>, BuildError> {
    let mut out: BTreeMap<u16, BTreeMap<FreeParam, ParamRange>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| BuildError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let sg: u16 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad space-group number '{}'", fields[0])))?;
        let param: FreeParam = fields[1].parse().map_err(err)?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
        let range =
            ParamRange::new(num(fields[2])?, num(fields[3])?, num(fields[4])?).map_err(|e| err(e.to_string()))?;
        if out.entry(sg).or_default().insert(param, range).is_some() {
            return Err(err(format!("duplicate entry for {sg} {param}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionKind {
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "two_theta")]
    TwoTheta,
}

/// One externally computed line pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePatternRecord {
    pub label: u16,
    pub kind: PositionKind,
    pub peaks: Vec<[f64; 2]>,
}

/// Reads one JSON record per non-blank line.
pub fn read_line_patterns(reader: impl BufRead) -> Result<Vec<LinePatternRecord>, BuildError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |message: String| BuildError::Parse { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LinePatternRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if rec.peaks.is_empty() {
            return Err(err("record has no peaks".into()));
        }
        if let Some(p) = rec.peaks.iter().find(|p| !(p[1] >= 0.0)) {
            return Err(err(format!("negative or invalid intensity {}", p[1])));
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(BuildError::EmptyInput);
    }
    Ok(records)
}

/// Renders externally computed line patterns into a split dataset.
pub fn ingest_line_patterns(
    records: &[LinePatternRecord],
    cfg: &PatternConfig,
    apply_lorentz: bool,
    split: &SplitSpec,
    out_dir: &Path,
) -> Result<BuildOutput, BuildError> {
    cfg.validate()?;
    split.validate()?;
    if records.is_empty() {
        return Err(BuildError::EmptyInput);
    }
    let window = cfg.window();

    let prepared: Vec<(Option<RenderedPattern>, u64)> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut dropped = 0u64;
            let peaks: Vec<(f64, f64)> = rec
                .peaks
                .iter()
                .filter_map(|&[pos, intensity]| {
                    let tt = match rec.kind {
                        PositionKind::TwoTheta => Some(pos),
                        PositionKind::Q => two_theta(pos, cfg.wavelength).ok(),
                    };
                    match tt {
                        Some(tt) if window.contains(tt) && tt > 0.0 && tt < 180.0 => Some((tt, intensity)),
                        _ => {
                            dropped += 1;
                            None
                        }
                    }
                })
                .collect();
            let prov = Provenance::Record { index: i as u64 };
            let rendered = match line_pattern_from_peaks(peaks, rec.label, prov, apply_lorentz) {
                Ok(lp) => Some(render(&lp, cfg)),
                Err(SynthError::NoPeaks) => None,
                Err(e) => return Err(BuildError::from(e)),
            };
            Ok((rendered, dropped))
        })
        .collect::<Result<_, BuildError>>()?;

    let mut by_label: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, (r, _)) in prepared.iter().enumerate() {
        if r.is_some() {
            by_label.entry(records[i].label).or_default().push(i);
        }
    }
    let mut to_test = vec![false; records.len()];
    for (&label, idx) in &by_label {
        for pick in split.test_units(label, idx.len()) {
            to_test[idx[pick]] = true;
        }
    }

    let mut sink = SplitSink::create(out_dir, cfg)?;
    let (mut skipped, mut dropped) = (0u64, 0u64);
    for (i, (rendered, d)) in prepared.into_iter().enumerate() {
        dropped += d;
        let label = records[i].label;
        sink.counts.entry(label).or_default().units += 1;
        match rendered {
            Some(p) => sink.push(p, to_test[i])?,
            None => {
                log::warn!("record {i} (label {label}) has no peak inside the window, skipped");
                sink.counts.entry(label).or_default().skipped += 1;
                skipped += 1;
            }
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} peaks outside the window or limiting sphere");
    }
    let labels: BTreeSet<u16> = records.iter().map(|r| r.label).collect();
    let family = labels
        .iter()
        .map(|&l| Family::of_number(l))
        .reduce(|a, b| if a == b { a } else { None })
        .flatten();
    let source = DataSource::Ingest {
        apply_lorentz,
        records_read: records.len() as u64,
        records_skipped: skipped,
        peaks_dropped: dropped,
    };
    sink.finish(family, source, cfg, None, split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Distinct lattice points per bin, per free parameter, per space group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeHistogram {
    pub bin_width: f64,
    pub groups: BTreeMap<u16, BTreeMap<FreeParam, Vec<HistogramBin>>>,
}

impl LatticeHistogram {
    /// Tab-separated `sg param lo hi count` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("sg\tparam\tlo\thi\tcount\n");
        for (sg, params) in &self.groups {
            for (p, bins) in params {
                for b in bins {
                    out.push_str(&format!("{sg}\t{p}\t{:.4}\t{:.4}\t{}\n", b.lo, b.hi, b.count));
                }
            }
        }
        out
    }
}

pub fn lattice_histogram(meta: &DatasetMetadata, bin_width: f64) -> Result<LatticeHistogram, BuildError> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(BuildError::BinWidth(bin_width));
    }
    let free = meta
        .family
        .map(|f| f.free_params())
        .ok_or(BuildError::NoLatticeProvenance)?;
    let mut seen: BTreeMap<u16, BTreeMap<u64, &[f64]>> = BTreeMap::new();
    for s in &meta.samples {
        if let Provenance::Lattice {
            params, lattice_index, ..
        } = &s.provenance
        {
            seen.entry(s.label).or_default().insert(*lattice_index, params);
        }
    }
    if seen.is_empty() {
        return Err(BuildError::NoLatticeProvenance);
    }
    let bin_of = |v: f64| (v / bin_width + 1e-9).floor() as i64;
    let mut groups = BTreeMap::new();
    for (sg, lattices) in seen {
        let mut per_param = BTreeMap::new();
        for (j, &param) in free.iter().enumerate() {
            let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
            for params in lattices.values() {
                *counts.entry(bin_of(params[j])).or_default() += 1;
            }
            let (&first, &last) = (counts.keys().next().unwrap(), counts.keys().next_back().unwrap());
            let bins = (first..=last)
                .map(|b| HistogramBin {
                    lo: b as f64 * bin_width,
                    hi: (b + 1) as f64 * bin_width,
                    count: counts.get(&b).copied().unwrap_or(0),
                })
                .collect();
            per_param.insert(param, bins);
        }
        groups.insert(sg, per_param);
    }
    Ok(LatticeHistogram { bin_width, groups })
}

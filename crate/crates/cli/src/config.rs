//! Resolved run configurations. Each subcommand writes one next to its
//! outputs; passing it back through `--config` reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use xtinct::builder::{parse_override_table, GridSpec, ParamRange, SplitSpec, SplitUnit};
use xtinct::spacegroup::FreeParam;
use xtinct::synth::{IntensityLaw, PatternConfig};
use xtinct::Family;

use crate::{ClassesArgs, CmdResult, EvalArgs, Failure, GenArgs, HistArgs, IngestArgs, RenderArgs};

pub const RUN_CONFIG_NAME: &str = "run_config.json";
pub const DEFAULT_CLASSES_H_MAX: u32 = 8;
pub const DEFAULT_NEIGHBORS: usize = 5;

/// Serialized with a `command` tag. Loading dispatches on the tag by hand
/// because integer-keyed maps do not survive serde's tagged-enum buffering.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Classes(ClassesConfig),
    Gen(GenConfig),
    Ingest(IngestConfig),
    Eval(EvalConfig),
    Hist(HistConfig),
}

impl RunConfig {
    fn command(&self) -> &'static str {
        match self {
            RunConfig::Classes(_) => "classes",
            RunConfig::Gen(_) => "gen",
            RunConfig::Ingest(_) => "ingest",
            RunConfig::Eval(_) => "eval",
            RunConfig::Hist(_) => "hist",
        }
    }

    pub fn load(path: &Path) -> CmdResult<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::usage)?;
        Self::from_json(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Failure::usage)
    }

    pub fn from_json(text: &str) -> anyhow::Result<RunConfig> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let command = value
            .as_object_mut()
            .and_then(|m| m.remove("command"))
            .ok_or_else(|| anyhow!("missing 'command' field"))?;
        Ok(match command.as_str() {
            Some("classes") => RunConfig::Classes(serde_json::from_value(value)?),
            Some("gen") => RunConfig::Gen(serde_json::from_value(value)?),
            Some("ingest") => RunConfig::Ingest(serde_json::from_value(value)?),
            Some("eval") => RunConfig::Eval(serde_json::from_value(value)?),
            Some("hist") => RunConfig::Hist(serde_json::from_value(value)?),
            _ => return Err(anyhow!("unknown command {command}")),
        })
    }

    pub fn save(&self, path: &Path) -> CmdResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(Failure::runtime)?;
        text.push('\n');
        fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::runtime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesConfig {
    pub family: Family,
    pub h_max: u32,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sg_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub grid: GridSpec,
    pub pattern: PatternConfig,
    pub split: SplitSpec,
    pub out: PathBuf,
    #[serde(default)]
    pub csv: bool,
    #[serde(default)]
    pub sg_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub input: PathBuf,
    pub apply_lorentz: bool,
    pub pattern: PatternConfig,
    pub split: SplitSpec,
    pub out: PathBuf,
    #[serde(default)]
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub neighbors: usize,
    pub relabel_by_class: bool,
    pub h_max: u32,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sg_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistConfig {
    pub meta: PathBuf,
    pub bin_width: f64,
    pub out: Option<PathBuf>,
}

/// Where a command writing `out` puts its run config: inside `out` when it
/// is a directory, else `<stem>.run_config.json` beside it.
pub fn run_config_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        return out.join(RUN_CONFIG_NAME);
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{RUN_CONFIG_NAME}"))
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::usage(anyhow!(msg.into()))
}

fn required<T>(v: Option<T>, flag: &str) -> CmdResult<T> {
    v.ok_or_else(|| usage(format!("{flag} is required (or pass --config)")))
}

/// Loads `--config` and checks it belongs to `want`.
fn base_config(path: Option<&PathBuf>, want: &str) -> CmdResult<Option<RunConfig>> {
    let Some(path) = path else { return Ok(None) };
    let cfg = RunConfig::load(path)?;
    if cfg.command() != want {
        return Err(usage(format!(
            "{} is a '{}' config, not '{want}'",
            path.display(),
            cfg.command()
        )));
    }
    Ok(Some(cfg))
}

pub fn resolve_classes(a: &ClassesArgs, sg_table: Option<PathBuf>) -> CmdResult<ClassesConfig> {
    let base = match base_config(a.config.as_ref(), "classes")? {
        Some(RunConfig::Classes(c)) => Some(c),
        _ => None,
    };
    let family = required(a.family.or(base.as_ref().map(|b| b.family)), "--family")?;
    let h_max = a
        .h_max
        .or(base.as_ref().map(|b| b.h_max))
        .unwrap_or(DEFAULT_CLASSES_H_MAX);
    Ok(ClassesConfig {
        family,
        h_max,
        out: a.out.clone().or(base.as_ref().and_then(|b| b.out.clone())),
        sg_table: sg_table.or(base.and_then(|b| b.sg_table)),
    })
}

fn apply_render(r: &RenderArgs, pattern: &mut PatternConfig, split: &mut SplitSpec) {
    if let Some(v) = r.fwhm {
        pattern.fwhm = v;
    }
    if let Some(v) = r.wavelength {
        pattern.wavelength = v;
    }
    if let Some((lo, hi)) = r.window {
        pattern.two_theta_min = lo;
        pattern.two_theta_max = hi;
    }
    if let Some(v) = r.points {
        pattern.n_points = v;
    }
    if let Some((train, test)) = r.split {
        split.train_parts = train;
        split.test_parts = test;
    }
    if let Some(u) = r.split_unit {
        split.unit = u;
    }
    if let Some(s) = r.seed {
        pattern.seed = s;
        split.seed = s;
    }
}

fn default_split() -> SplitSpec {
    SplitSpec {
        train_parts: 5,
        test_parts: 1,
        unit: SplitUnit::Replicate,
        seed: 0,
    }
}

fn check_pattern(pattern: &PatternConfig, split: &SplitSpec) -> CmdResult<()> {
    pattern.validate().map_err(Failure::usage)?;
    split.validate().map_err(Failure::usage)
}

fn parse_intensity(s: &str) -> CmdResult<IntensityLaw> {
    match s {
        "uniform" => Ok(IntensityLaw::Uniform),
        "constant" => Ok(IntensityLaw::Constant),
        other => Err(usage(format!(
            "unknown intensity law '{other}' (expected uniform or constant)"
        ))),
    }
}

/// Applies flags over `--config` (or defaults). An imbalance file is folded
/// into `grid.overrides`, so the saved config no longer needs the file.
pub fn resolve_gen(a: &GenArgs, sg_table: Option<PathBuf>) -> CmdResult<GenConfig> {
    let base = match base_config(a.config.as_ref(), "gen")? {
        Some(RunConfig::Gen(c)) => Some(c),
        _ => None,
    };
    let family = required(a.family.or(base.as_ref().map(|b| b.grid.family)), "--family")?;
    let mut grid = match &base {
        Some(b) if b.grid.family == family => b.grid.clone(),
        _ => GridSpec::default_for(family),
    };
    if let Some(n) = a.patterns_per_lattice {
        grid.patterns_per_lattice = n;
    }
    for (flag, name, param) in [
        (a.a_range, "--a-range", FreeParam::A),
        (a.c_range, "--c-range", FreeParam::C),
    ] {
        if let Some((lo, hi)) = flag {
            let r = grid
                .ranges
                .get_mut(&param)
                .ok_or_else(|| usage(format!("{name} does not apply to the {family} family")))?;
            *r = ParamRange::new(lo, hi, r.step)?;
        }
    }
    if let Some(step) = a.step {
        for r in grid.ranges.values_mut() {
            *r = ParamRange::new(r.min, r.max, step)?;
        }
    }
    if let Some(path) = &a.imbalance_file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading imbalance file {}", path.display()))
            .map_err(Failure::usage)?;
        let overrides = parse_override_table(&text)?;
        let missing: Vec<u16> = family.sg_range().filter(|sg| !overrides.contains_key(sg)).collect();
        if !missing.is_empty() {
            return Err(usage(format!(
                "imbalance file {} has no range for space groups {missing:?}",
                path.display()
            )));
        }
        grid.overrides = overrides;
    }
    grid.validate()?;

    let (mut pattern, mut split) = match &base {
        Some(b) => (b.pattern.clone(), b.split),
        None => (PatternConfig::default(), default_split()),
    };
    apply_render(&a.render, &mut pattern, &mut split);
    if let Some(h) = a.h_max {
        pattern.h_max = Some(h);
    }
    if let Some(law) = &a.intensity {
        pattern.intensity_law = parse_intensity(law)?;
    }
    check_pattern(&pattern, &split)?;

    Ok(GenConfig {
        grid,
        pattern,
        split,
        out: required(a.render.out.clone().or(base.as_ref().map(|b| b.out.clone())), "--out")?,
        csv: a.render.csv.or(base.as_ref().map(|b| b.csv)).unwrap_or(false),
        sg_table: sg_table.or(base.and_then(|b| b.sg_table)),
    })
}

pub fn resolve_ingest(a: &IngestArgs) -> CmdResult<IngestConfig> {
    let base = match base_config(a.config.as_ref(), "ingest")? {
        Some(RunConfig::Ingest(c)) => Some(c),
        _ => None,
    };
    let (mut pattern, mut split) = match &base {
        Some(b) => (b.pattern.clone(), b.split),
        None => (PatternConfig::default(), default_split()),
    };
    apply_render(&a.render, &mut pattern, &mut split);
    check_pattern(&pattern, &split)?;
    Ok(IngestConfig {
        input: required(a.input.clone().or(base.as_ref().map(|b| b.input.clone())), "--in")?,
        apply_lorentz: a
            .apply_lorentz
            .or(base.as_ref().map(|b| b.apply_lorentz))
            .unwrap_or(false),
        pattern,
        split,
        out: required(a.render.out.clone().or(base.as_ref().map(|b| b.out.clone())), "--out")?,
        csv: a.render.csv.or(base.as_ref().map(|b| b.csv)).unwrap_or(false),
    })
}

pub fn resolve_eval(a: &EvalArgs, sg_table: Option<PathBuf>) -> CmdResult<EvalConfig> {
    let base = match base_config(a.config.as_ref(), "eval")? {
        Some(RunConfig::Eval(c)) => Some(c),
        _ => None,
    };
    let neighbors = a
        .neighbors
        .or(base.as_ref().map(|b| b.neighbors))
        .unwrap_or(DEFAULT_NEIGHBORS);
    if neighbors == 0 {
        return Err(usage("--neighbors must be at least 1"));
    }
    Ok(EvalConfig {
        train: required(a.train.clone().or(base.as_ref().map(|b| b.train.clone())), "--train")?,
        test: required(a.test.clone().or(base.as_ref().map(|b| b.test.clone())), "--test")?,
        neighbors,
        relabel_by_class: a
            .relabel_by_class
            .or(base.as_ref().map(|b| b.relabel_by_class))
            .unwrap_or(false),
        h_max: a
            .h_max
            .or(base.as_ref().map(|b| b.h_max))
            .unwrap_or(DEFAULT_CLASSES_H_MAX),
        out: a.out.clone().or(base.as_ref().and_then(|b| b.out.clone())),
        sg_table: sg_table.or(base.and_then(|b| b.sg_table)),
    })
}

pub fn resolve_hist(a: &HistArgs) -> CmdResult<HistConfig> {
    let base = match base_config(a.config.as_ref(), "hist")? {
        Some(RunConfig::Hist(c)) => Some(c),
        _ => None,
    };
    let bin_width = required(a.bin_width.or(base.as_ref().map(|b| b.bin_width)), "--bin-width")?;
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(usage(format!("--bin-width must be positive, got {bin_width}")));
    }
    Ok(HistConfig {
        meta: required(a.meta.clone().or(base.as_ref().map(|b| b.meta.clone())), "--meta")?,
        bin_width,
        out: a.out.clone().or(base.and_then(|b| b.out)),
    })
}

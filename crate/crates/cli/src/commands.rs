use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use xtinct::builder::{build_ulbd, ingest_line_patterns, lattice_histogram, read_line_patterns, BuildOutput};
use xtinct::classes::{compute_classes, theoretical_topk, ClassError, Partition};
use xtinct::eval::{knn_classify, report, EvalReport};
use xtinct::io::{read_container, read_dataset, read_metadata, write_csv, SplitRole};
use xtinct::{Family, Registry};

use crate::config::{
    resolve_classes, resolve_eval, resolve_gen, resolve_hist, resolve_ingest, run_config_path, RunConfig,
};
use crate::{ClassesArgs, CmdResult, EvalArgs, Failure, GenArgs, HistArgs, IngestArgs};

pub const TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub index: usize,
    pub members: Vec<u16>,
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub accuracy: f64,
}

/// Machine-readable output of `classes`; `class_of` is the label map used
/// for class-level training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesReport {
    pub family: Family,
    pub h_max: u32,
    pub n_groups: usize,
    pub classes: Vec<ClassEntry>,
    pub class_of: BTreeMap<u16, usize>,
    pub topk: Vec<TopK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub report: EvalReport,
    pub family: Option<Family>,
    /// Present when labels were merged into extinction classes.
    pub class_of: Option<BTreeMap<u16, usize>>,
}

pub fn load_registry(path: Option<&Path>) -> CmdResult<Registry> {
    match path {
        Some(p) => Registry::from_path(p)
            .with_context(|| format!("loading space-group table {}", p.display()))
            .map_err(Failure::usage),
        None => Registry::shipped().map_err(Failure::runtime),
    }
}

fn class_failure(e: ClassError) -> Failure {
    match e {
        ClassError::HMaxTooSmall { .. } => Failure::usage(e),
        _ => Failure::runtime(e),
    }
}

fn write_json(value: &impl Serialize, path: &Path) -> CmdResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::runtime)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::runtime)
}

fn topk_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{:>7.1}", 100.0 * v)).collect()
}

fn topk_header() -> String {
    (1..=TOP_K).map(|k| format!("{:>7}", format!("top-{k}"))).collect()
}

pub fn classes_report(partition: &Partition, registry: &Registry, h_max: u32) -> ClassesReport {
    let symbol = |n: u16| registry.get(n).map(|g| g.symbol().to_string()).unwrap_or_default();
    let classes: Vec<ClassEntry> = partition
        .classes
        .iter()
        .enumerate()
        .map(|(index, c)| ClassEntry {
            index,
            members: c.members.clone(),
            symbols: c.members.iter().map(|&m| symbol(m)).collect(),
        })
        .collect();
    let class_of = classes
        .iter()
        .flat_map(|c| c.members.iter().map(move |&m| (m, c.index)))
        .collect();
    ClassesReport {
        family: partition.family,
        h_max,
        n_groups: partition.group_count(),
        classes,
        class_of,
        topk: (1..=TOP_K)
            .map(|k| TopK {
                k,
                accuracy: theoretical_topk(partition, k),
            })
            .collect(),
    }
}

pub fn classes(a: &ClassesArgs, sg_table: Option<PathBuf>) -> CmdResult<()> {
    let cfg = resolve_classes(a, sg_table)?;
    let registry = load_registry(cfg.sg_table.as_deref())?;
    let partition = compute_classes(cfg.family, &registry, cfg.h_max).map_err(class_failure)?;
    let rep = classes_report(&partition, &registry, cfg.h_max);

    println!(
        "{}: {} space groups in {} extinction classes (h_max {})",
        rep.family,
        rep.n_groups,
        rep.classes.len(),
        rep.h_max
    );
    for c in &rep.classes {
        let members: Vec<String> = c
            .members
            .iter()
            .zip(&c.symbols)
            .map(|(n, s)| format!("{n} {s}"))
            .collect();
        println!("  class {:>2}: {}", c.index + 1, members.join(", "));
    }
    println!();
    println!("{:<20}{}", "family", topk_header());
    println!(
        "{:<20}{}",
        rep.family.name(),
        topk_row(rep.topk.iter().map(|t| t.accuracy))
    );

    if let Some(out) = &cfg.out {
        write_json(&rep, out)?;
        RunConfig::Classes(cfg.clone()).save(&run_config_path(out, false))?;
    }
    Ok(())
}

fn export_csv(out_dir: &Path) -> CmdResult<()> {
    for role in [SplitRole::Train, SplitRole::Test] {
        let container = out_dir.join(format!("{}.ulbd", role.stem()));
        let (_, samples) = read_container(&container).map_err(Failure::runtime)?;
        write_csv(&samples, &out_dir.join(format!("{}.csv", role.stem()))).map_err(Failure::runtime)?;
    }
    Ok(())
}

fn print_build_summary(out: &BuildOutput, out_dir: &Path) {
    let skipped: u64 = out.counts.values().map(|c| c.skipped).sum();
    let units: u64 = out.counts.values().map(|c| c.units).sum();
    println!(
        "train: {:>9} samples -> {}",
        out.train.n_samples,
        out_dir.join("train.ulbd").display()
    );
    println!(
        "test:  {:>9} samples -> {}",
        out.test.n_samples,
        out_dir.join("test.ulbd").display()
    );
    println!(
        "{} labels, {units} units, {skipped} skipped (no peak in window)",
        out.counts.len()
    );
}

pub fn gen(a: &GenArgs, sg_table: Option<PathBuf>) -> CmdResult<()> {
    let cfg = resolve_gen(a, sg_table)?;
    let registry = load_registry(cfg.sg_table.as_deref())?;
    let out = build_ulbd(&registry, &cfg.grid, &cfg.pattern, &cfg.split, &cfg.out)?;
    if cfg.csv {
        export_csv(&cfg.out)?;
    }
    RunConfig::Gen(cfg.clone()).save(&run_config_path(&cfg.out, true))?;
    print_build_summary(&out, &cfg.out);
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> CmdResult<()> {
    let cfg = resolve_ingest(a)?;
    let file = File::open(&cfg.input)
        .with_context(|| format!("opening {}", cfg.input.display()))
        .map_err(Failure::runtime)?;
    let records = read_line_patterns(BufReader::new(file))?;
    let out = ingest_line_patterns(&records, &cfg.pattern, cfg.apply_lorentz, &cfg.split, &cfg.out)?;
    if cfg.csv {
        export_csv(&cfg.out)?;
    }
    RunConfig::Ingest(cfg.clone()).save(&run_config_path(&cfg.out, true))?;
    print_build_summary(&out, &cfg.out);
    Ok(())
}

pub fn eval(a: &EvalArgs, sg_table: Option<PathBuf>) -> CmdResult<()> {
    let cfg = resolve_eval(a, sg_table)?;
    let train = read_dataset(&cfg.train).map_err(Failure::runtime)?;
    let test = read_dataset(&cfg.test).map_err(Failure::runtime)?;
    let family = train
        .metadata
        .family
        .or_else(|| train.samples.first().and_then(|s| Family::of_number(s.label)));
    let predictions = knn_classify(&train.samples, &test.samples, cfg.neighbors).map_err(Failure::runtime)?;

    let (predictions, class_of) = if cfg.relabel_by_class {
        let family =
            family.ok_or_else(|| Failure::runtime(anyhow!("cannot tell the family of an empty training set")))?;
        let registry = load_registry(cfg.sg_table.as_deref())?;
        let partition = compute_classes(family, &registry, cfg.h_max).map_err(class_failure)?;
        if let Some(s) = train
            .samples
            .iter()
            .chain(&test.samples)
            .find(|s| !family.contains(s.label))
        {
            return Err(class_failure(ClassError::ForeignLabel { label: s.label, family }));
        }
        let map: BTreeMap<u16, usize> = family
            .sg_range()
            .filter_map(|sg| partition.class_of(sg).map(|c| (sg, c)))
            .collect();
        (predictions.map_labels(|l| map[&l] as u16), Some(map))
    } else {
        (predictions, None)
    };

    let rep = report(&predictions, train.samples.len(), cfg.neighbors, cfg.relabel_by_class);
    println!(
        "train {}  test {}  neighbors {}  labels {}",
        rep.n_train,
        rep.n_test,
        rep.neighbors,
        if cfg.relabel_by_class {
            "extinction-class"
        } else {
            "space-group"
        }
    );
    println!("{}", topk_header());
    println!("{}", topk_row(rep.topk.iter().map(|&(_, acc)| acc)));

    if let Some(out) = &cfg.out {
        let output = EvalOutput {
            report: rep,
            family,
            class_of,
        };
        write_json(&output, out)?;
        RunConfig::Eval(cfg.clone()).save(&run_config_path(out, false))?;
    }
    Ok(())
}

pub fn hist(a: &HistArgs) -> CmdResult<()> {
    let cfg = resolve_hist(a)?;
    let meta = read_metadata(&cfg.meta).map_err(Failure::runtime)?;
    let table = lattice_histogram(&meta, cfg.bin_width)?.to_table();
    print!("{table}");
    if let Some(out) = &cfg.out {
        fs::write(out, &table)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(Failure::runtime)?;
        RunConfig::Hist(cfg.clone()).save(&run_config_path(out, false))?;
    }
    Ok(())
}

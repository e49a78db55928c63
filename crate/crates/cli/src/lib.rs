//! Command-line front end: argument parsing, config resolution and the
//! subcommands of the `xtinct` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use xtinct::builder::{BuildError, SplitUnit};
use xtinct::Family;

/// Exit status 2: the invocation or a config file is wrong.
pub const EXIT_USAGE: u8 = 2;
/// Exit status 1: the run itself failed.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e:#}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Grid(_)
            | BuildError::Split(_)
            | BuildError::Config(_)
            | BuildError::MissingOverride(_)
            | BuildError::EmptyGrid
            | BuildError::Parse { .. }
            | BuildError::BinWidth(_) => Failure::usage(e),
            _ => Failure::runtime(e),
        }
    }
}

pub type CmdResult<T> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "xtinct",
    version,
    about = "Extinction-consistent synthetic powder diffraction datasets"
)]
pub struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Space-group data file used instead of the shipped table.
    #[arg(long, global = true, env = "XTINCT_SG_TABLE")]
    pub sg_table: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition a family into extinction classes and print the top-k ceilings.
    Classes(ClassesArgs),
    /// Generate a uniform-lattice dataset.
    Gen(GenArgs),
    /// Render externally computed line patterns into a dataset.
    Ingest(IngestArgs),
    /// k-nearest-neighbour baseline on a train/test pair.
    Eval(EvalArgs),
    /// Lattice-parameter histogram of a dataset.
    Hist(HistArgs),
}

#[derive(Debug, Args)]
pub struct ClassesArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub h_max: Option<u32>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by the two commands that render patterns.
#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub fwhm: Option<f64>,
    #[arg(long)]
    pub wavelength: Option<f64>,
    /// 2θ window in degrees, `min:max`.
    #[arg(long, value_parser = parse_f64_pair)]
    pub window: Option<(f64, f64)>,
    /// Samples per pattern.
    #[arg(long)]
    pub points: Option<usize>,
    /// Train:test ratio, e.g. `5:1`.
    #[arg(long, value_parser = parse_u32_pair)]
    pub split: Option<(u32, u32)>,
    #[arg(long)]
    pub split_unit: Option<SplitUnit>,
    /// Seeds both intensity draws and the split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write `train.csv` and `test.csv`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub csv: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<Family>,
    /// Range of the a axis in Å, `min:max`.
    #[arg(long, value_parser = parse_f64_pair)]
    pub a_range: Option<(f64, f64)>,
    /// Range of the c axis in Å, `min:max`.
    #[arg(long, value_parser = parse_f64_pair)]
    pub c_range: Option<(f64, f64)>,
    /// Grid step in Å applied to every free length.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub patterns_per_lattice: Option<u32>,
    /// Index bound for reflection enumeration; derived from the window when absent.
    #[arg(long)]
    pub h_max: Option<u32>,
    /// Intensity law before Lorentz correction: `uniform` or `constant`.
    #[arg(long)]
    pub intensity: Option<String>,
    /// Per-group ranges, one `sg param min max step` per line.
    #[arg(long)]
    pub imbalance_file: Option<PathBuf>,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Line-pattern records, one JSON object per line.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Multiply each intensity by the Lorentz factor before normalizing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub apply_lorentz: Option<bool>,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Score on extinction-class labels instead of space groups.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub relabel_by_class: Option<bool>,
    /// Fingerprint bound used when relabeling.
    #[arg(long)]
    pub h_max: Option<u32>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// A `.meta.json` sidecar.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Bin width in Å.
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn split_pair(s: &str) -> Result<(&str, &str), String> {
    s.split_once(':').ok_or_else(|| format!("expected 'a:b', got '{s}'"))
}

pub fn parse_f64_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = split_pair(s)?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

pub fn parse_u32_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = split_pair(s)?;
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("'{t}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// Runs a parsed command line, inside a dedicated pool when `--threads` is set.
pub fn run(cli: Cli) -> CmdResult<()> {
    let Cli {
        threads,
        sg_table,
        command,
    } = cli;
    let dispatch = move || match command {
        Command::Classes(a) => commands::classes(&a, sg_table),
        Command::Gen(a) => commands::gen(&a, sg_table),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Eval(a) => commands::eval(&a, sg_table),
        Command::Hist(a) => commands::hist(&a),
    };
    match threads {
        None => dispatch(),
        Some(0) => Err(Failure::usage(anyhow::anyhow!("--threads must be at least 1"))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(Failure::runtime)?;
            pool.install(dispatch)
        }
    }
}

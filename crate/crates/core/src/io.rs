//! On-disk dataset artifact: a packed little-endian pattern container plus a
//! `<stem>.meta.json` sidecar.
//!
//! Container layout:
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `ULBD`               |
//! | 4      | 2    | version (u16)              |
//! | 6      | 8    | n_samples (u64)            |
//! | 14     | 4    | n_points (u32)             |
//! | 18     | 4    | two_theta_min (f32)        |
//! | 22     | 4    | two_theta_max (f32)        |
//! | 26     | ...  | per sample: label (u16), n_points × f32 |

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{ResolvedGrid, SplitSpec};
use crate::spacegroup::Family;
use crate::synth::{PatternConfig, Provenance};

pub const MAGIC: &[u8; 4] = b"ULBD";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 26;
const COUNT_OFFSET: u64 = 6;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte 0: expected ULBD, found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} at byte 4 (supported: {FORMAT_VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("file truncated at byte {offset}: header declares {expected} bytes")]
    Truncated { offset: u64, expected: u64 },
    #[error("{extra} unexpected bytes after byte {offset}: declared sample count disagrees with file length")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("sample {index} has {got} points, expected {expected}")]
    Heterogeneous { index: usize, expected: usize, got: usize },
    #[error("metadata {path}: {source}")]
    Metadata {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("metadata disagrees with container: {0}")]
    MetadataMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: u16,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub version: u16,
    pub n_samples: u64,
    pub n_points: u32,
    pub two_theta_min: f32,
    pub two_theta_max: f32,
}

impl Header {
    pub fn record_len(&self) -> u64 {
        2 + 4 * self.n_points as u64
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.n_samples * self.record_len()
    }

    fn to_bytes(self) -> [u8; HEADER_LEN as usize] {
        let mut out = [0u8; HEADER_LEN as usize];
        out[0..4].copy_from_slice(MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..14].copy_from_slice(&self.n_samples.to_le_bytes());
        out[14..18].copy_from_slice(&self.n_points.to_le_bytes());
        out[18..22].copy_from_slice(&self.two_theta_min.to_le_bytes());
        out[22..26].copy_from_slice(&self.two_theta_max.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn stem(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Ulbd,
    Ingest {
        apply_lorentz: bool,
        records_read: u64,
        records_skipped: u64,
        peaks_dropped: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    /// Lattice points (or ingested records) considered for this label.
    pub units: u64,
    /// Units skipped because no peak fell inside the window.
    pub skipped: u64,
    /// Samples generated for this label across all splits.
    pub samples_total: u64,
    /// Samples of this label stored in this file.
    pub samples_in_file: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    /// Position in the full generation order, before splitting.
    pub index: u64,
    pub label: u16,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format_version: u16,
    pub role: SplitRole,
    pub source: DataSource,
    pub family: Option<Family>,
    pub pattern: PatternConfig,
    pub grid: Option<ResolvedGrid>,
    pub split: SplitSpec,
    pub group_counts: BTreeMap<u16, GroupCounts>,
    pub n_samples: u64,
    pub samples: Vec<SampleInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub samples: Vec<Sample>,
    pub metadata: DatasetMetadata,
}

/// `<dir>/<stem>.meta.json` for a container at `<dir>/<stem>.<ext>`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Streaming container writer; the sample count is patched on [`finish`](Self::finish).
pub struct DatasetWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: Header,
}

impl DatasetWriter {
    pub fn create(path: &Path, n_points: usize, two_theta_min: f64, two_theta_max: f64) -> Result<Self, IoError> {
        let file = File::create(path).map_err(io_err(path))?;
        let header = Header {
            version: FORMAT_VERSION,
            n_samples: 0,
            n_points: n_points as u32,
            two_theta_min: two_theta_min as f32,
            two_theta_max: two_theta_max as f32,
        };
        let mut out = BufWriter::new(file);
        out.write_all(&header.to_bytes()).map_err(io_err(path))?;
        Ok(DatasetWriter {
            path: path.to_path_buf(),
            out,
            header,
        })
    }

    pub fn n_samples(&self) -> u64 {
        self.header.n_samples
    }

    pub fn push(&mut self, label: u16, values: &[f32]) -> Result<(), IoError> {
        if values.len() != self.header.n_points as usize {
            return Err(IoError::Heterogeneous {
                index: self.header.n_samples as usize,
                expected: self.header.n_points as usize,
                got: values.len(),
            });
        }
        let mut record = Vec::with_capacity(self.header.record_len() as usize);
        record.extend_from_slice(&label.to_le_bytes());
        for v in values {
            record.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&record).map_err(io_err(&self.path))?;
        self.header.n_samples += 1;
        Ok(())
    }

    /// Patches the count, writes the sidecar, and syncs both to disk.
    pub fn finish(self, metadata: &DatasetMetadata) -> Result<Header, IoError> {
        let path = self.path;
        if metadata.n_samples != self.header.n_samples || metadata.samples.len() as u64 != self.header.n_samples {
            return Err(IoError::MetadataMismatch(format!(
                "metadata lists {} samples ({} entries), container holds {}",
                metadata.n_samples,
                metadata.samples.len(),
                self.header.n_samples
            )));
        }
        let mut file = self.out.into_inner().map_err(|e| IoError::Io {
            path: path.clone(),
            source: e.into_error(),
        })?;
        file.seek(SeekFrom::Start(COUNT_OFFSET)).map_err(io_err(&path))?;
        file.write_all(&self.header.n_samples.to_le_bytes())
            .map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;

        let meta_path = sidecar_path(&path);
        let mut text = serde_json::to_string_pretty(metadata).map_err(|source| IoError::Metadata {
            path: meta_path.clone(),
            source,
        })?;
        text.push('\n');
        let mut meta = File::create(&meta_path).map_err(io_err(&meta_path))?;
        meta.write_all(text.as_bytes()).map_err(io_err(&meta_path))?;
        meta.sync_all().map_err(io_err(&meta_path))?;
        Ok(self.header)
    }
}

/// Writes a whole dataset at once.
pub fn write_dataset(samples: &[Sample], metadata: &DatasetMetadata, path: &Path) -> Result<Header, IoError> {
    let n_points = metadata.pattern.n_points;
    let mut w = DatasetWriter::create(
        path,
        n_points,
        metadata.pattern.two_theta_min,
        metadata.pattern.two_theta_max,
    )?;
    for s in samples {
        w.push(s.label, &s.values)?;
    }
    w.finish(metadata)
}

/// Reads and validates the binary container alone.
pub fn read_container(path: &Path) -> Result<(Header, Vec<Sample>), IoError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    parse_container(&bytes)
}

pub fn parse_container(bytes: &[u8]) -> Result<(Header, Vec<Sample>), IoError> {
    let len = bytes.len() as u64;
    if len < 4 {
        return Err(IoError::Truncated {
            offset: len,
            expected: HEADER_LEN,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(IoError::BadMagic { found: magic });
    }
    if len < HEADER_LEN {
        return Err(IoError::Truncated {
            offset: len,
            expected: HEADER_LEN,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion { found: version });
    }
    let header = Header {
        version,
        n_samples: u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
        n_points: u32::from_le_bytes(bytes[14..18].try_into().unwrap()),
        two_theta_min: f32::from_le_bytes(bytes[18..22].try_into().unwrap()),
        two_theta_max: f32::from_le_bytes(bytes[22..26].try_into().unwrap()),
    };
    let expected = header
        .n_samples
        .checked_mul(header.record_len())
        .and_then(|b| b.checked_add(HEADER_LEN))
        .unwrap_or(u64::MAX);
    if len < expected {
        return Err(IoError::Truncated { offset: len, expected });
    }
    if len > expected {
        return Err(IoError::TrailingBytes {
            offset: expected,
            extra: len - expected,
        });
    }
    let rec = header.record_len() as usize;
    let samples = bytes[HEADER_LEN as usize..]
        .chunks_exact(rec.max(1))
        .take(header.n_samples as usize)
        .map(|chunk| Sample {
            label: u16::from_le_bytes([chunk[0], chunk[1]]),
            values: chunk[2..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        })
        .collect();
    Ok((header, samples))
}

pub fn read_metadata(path: &Path) -> Result<DatasetMetadata, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Metadata {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a container and its sidecar, checking that they agree.
pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    let (header, samples) = read_container(path)?;
    let metadata = read_metadata(&sidecar_path(path))?;
    if metadata.n_samples != header.n_samples || metadata.samples.len() != samples.len() {
        return Err(IoError::MetadataMismatch(format!(
            "metadata lists {} samples, container holds {}",
            metadata.n_samples, header.n_samples
        )));
    }
    if let Some((i, _)) = metadata
        .samples
        .iter()
        .zip(&samples)
        .enumerate()
        .find(|(_, (m, s))| m.label != s.label)
    {
        return Err(IoError::MetadataMismatch(format!("label of sample {i} differs")));
    }
    Ok(Dataset {
        header,
        samples,
        metadata,
    })
}

/// Spot-check export: one row per sample, label then intensities.
pub fn write_csv(samples: &[Sample], path: &Path) -> Result<(), IoError> {
    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        let mut row = s.label.to_string();
        for v in &s.values {
            row.push(',');
            row.push_str(&v.to_string());
        }
        row.push('\n');
        out.write_all(row.as_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

//! Line-delimited JSON manifest: one policy header, then one record per
//! generated pair in item order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetPolicy;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: u32,
    pub policy: DatasetPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreakRecord {
    /// Top-left `(row, col)` inside the crop.
    pub position: [usize; 2],
    pub size: [usize; 2],
    pub intensities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub crop_origin: [usize; 2],
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Exponent applied to the sharp crop; 1 when gamma augmentation is off.
    pub gamma: f64,
    /// Flat `[dx0, dy0, dx1, dy1, …]` camera trajectory.
    pub trajectory: Vec<f64>,
    pub rotation_per_sample: f64,
    pub streak_seed: Option<u64>,
    pub streaks: Vec<StreakRecord>,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub blurred_preclip_max: f64,
    pub sharp_preclip_max: f64,
    /// Largest printed-sharp value inside the streak footprints, before and
    /// after clipping. Absent when no streaks were printed.
    pub streak_preclip_max: Option<f64>,
    pub streak_clip_max: Option<f64>,
    pub blurred: String,
    pub sharp: String,
    pub blurred_sha256: String,
    pub sharp_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok(PairData),
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub source: String,
    pub crop_index: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl PairRecord {
    pub fn data(&self) -> Option<&PairData> {
        match &self.outcome {
            Outcome::Ok(d) => Some(d),
            Outcome::Error { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub header: Header,
    pub records: Vec<PairRecord>,
}

fn json_line<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    let mut s = serde_json::to_string(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    Ok(s)
}

/// Appends records as they complete. Every line is flushed to disk before
/// the next is written, so a killed run leaves a valid prefix.
pub struct ManifestWriter {
    file: fs::File,
    path: std::path::PathBuf,
}

impl ManifestWriter {
    /// Starts a manifest with `header` followed by `existing` records.
    pub fn create(path: &Path, header: &Header, existing: &[PairRecord]) -> Result<Self> {
        let mut text = json_line(header, path)?;
        for r in existing {
            text.push_str(&json_line(r, path)?);
        }
        crate::imageio::write_atomic(path, text.as_bytes())?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        Ok(ManifestWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &PairRecord) -> Result<()> {
        let line = json_line(record, &self.path)?;
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reads a manifest. A final line cut short by a crash is dropped; any other
/// malformed line is an error.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| CliError::io(path, e))?;
    let parse_err = |source| CliError::Json {
        path: path.to_path_buf(),
        source,
    };
    let first = lines
        .first()
        .ok_or_else(|| CliError::Config(format!("{}: empty manifest", path.display())))?;
    let header: Header = serde_json::from_str(first).map_err(parse_err)?;
    if header.schema != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: manifest schema {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            header.schema
        )));
    }
    let mut records = Vec::with_capacity(lines.len().saturating_sub(1));
    let body = &lines[1..];
    for (i, line) in body.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PairRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == body.len() => break,
            Err(e) => return Err(parse_err(e)),
        }
    }
    Ok(Manifest { header, records })
}

//! EPOC container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `EPOC`                              |
//! | 2     | version, `u16` = 1                        |
//! | 4×3   | n_trials, n_channels, n_samples (`u32`)   |
//! | 8     | sampling rate (`f64`)                     |
//! | 4×N   | samples as `f32`, trial-major then channel-major |
//! | 4     | metadata length in bytes (`u32`)          |
//! | …     | UTF-8 JSON metadata                       |
//!
//! The metadata object has the keys `subject_id`, `labels`, `stim_freqs`,
//! `stim_phases` and `channel_names`, written in that order.
//!
//! Samples are stored as `f32`, so saving quantizes in-memory `f64` data;
//! a set that was itself loaded from a file round-trips bit for bit.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, EpochSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EPOC";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12 + 8;

#[derive(Serialize, Deserialize)]
struct Metadata {
    subject_id: String,
    labels: Vec<usize>,
    stim_freqs: Vec<f64>,
    stim_phases: Vec<f64>,
    channel_names: Vec<String>,
}

pub fn encode_epochs(epochs: &EpochSet) -> Result<Vec<u8>> {
    epochs.validate()?;
    let (n, c, s) = epochs.trials.dim();
    let dims: Vec<u32> = [n, c, s]
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::FormatViolation(format!("dimension {d} exceeds u32"))))
        .collect::<Result<_>>()?;
    let meta = serde_json::to_vec(&Metadata {
        subject_id: epochs.subject_id.clone(),
        labels: epochs.labels.clone(),
        stim_freqs: epochs.stim_freqs.clone(),
        stim_phases: epochs.stim_phases.clone(),
        channel_names: epochs.channel_names.clone(),
    })
    .map_err(|e| Error::FormatViolation(e.to_string()))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * c * s + 4 + meta.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&epochs.fs.to_le_bytes());
    // iter() on a standard-layout array walks trial, channel, sample
    for &v in epochs.trials.as_standard_layout().iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::FormatViolation(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_epochs(bytes: &[u8]) -> Result<EpochSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::FormatViolation("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::FormatViolation(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let c = r.u32()? as usize;
    let s = r.u32()? as usize;
    let fs = r.f64()?;
    let count = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(s))
        .ok_or_else(|| Error::FormatViolation("shape overflow".into()))?;
    let raw = r.take(
        count
            .checked_mul(4)
            .ok_or_else(|| Error::FormatViolation("shape overflow".into()))?,
    )?;
    let data: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let meta_len = r.u32()? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::FormatViolation(format!("metadata: {e}")))?;
    if r.pos != bytes.len() {
        return Err(Error::FormatViolation(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let trials = Array3::from_shape_vec((n, c, s), data)
        .map_err(|e| Error::FormatViolation(e.to_string()))?;
    EpochSet::new(
        trials,
        meta.labels,
        meta.stim_freqs,
        meta.stim_phases,
        fs,
        meta.subject_id,
        meta.channel_names,
    )
    .map_err(|e| Error::FormatViolation(e.to_string()))
}

pub fn save_epochs(epochs: &EpochSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_epochs(epochs)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an EPOC file without manifest checks.
pub fn read_epochs(path: impl AsRef<Path>) -> Result<EpochSet> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_epochs(&bytes)
}

/// Loads the raw recording of `subject`, checking it against the manifest.
pub fn load_epochs(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
    subject: &str,
) -> Result<EpochSet> {
    if !manifest.subject_ids.iter().any(|s| s == subject) {
        return Err(Error::SubjectUnknown(subject.to_string()));
    }
    let set = read_epochs(path)?;
    if set.fs != manifest.fs_raw {
        return Err(Error::FormatViolation(format!(
            "file sampled at {} Hz, manifest declares {} Hz",
            set.fs, manifest.fs_raw
        )));
    }
    Ok(set)
}

//! Binary model checkpoints.
//!
//! Layout (little-endian): `b"DANM"`, `u16` version, `u32` length of the
//! JSON configuration, the configuration, then every tensor as raw `f64`
//! in the order `w_s, b_s, gamma, beta, run_mean, run_var, w_1, b_1, w_2,
//! b_2`, and a trailing CRC-32 of all preceding bytes.

use std::path::Path;

use super::config::DanConfig;
use super::model::{DanModel, DanParams, Mode};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DANM";
const VERSION: u16 = 1;

pub fn encode_model(model: &DanModel) -> Result<Vec<u8>> {
    model.validate()?;
    let cfg = serde_json::to_vec(&model.config).map_err(|e| Error::FormatViolation(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    let p = &model.params;
    let tensors: [&[f64]; 10] = [
        p.w_s.as_slice().expect("standard layout"),
        p.b_s.as_slice().expect("standard layout"),
        p.gamma.as_slice().expect("standard layout"),
        p.beta.as_slice().expect("standard layout"),
        model.run_mean.as_slice().expect("standard layout"),
        model.run_var.as_slice().expect("standard layout"),
        p.w_1.as_slice().expect("standard layout"),
        p.b_1.as_slice().expect("standard layout"),
        p.w_2.as_slice().expect("standard layout"),
        p.b_2.as_slice().expect("standard layout"),
    ];
    for t in tensors {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
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
            .ok_or_else(|| Error::FormatViolation("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let bytes = self.take(dst.len() * 8)?;
        for (d, c) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
        Ok(())
    }
}

/// Decodes a checkpoint; the model is returned in inference mode.
pub fn decode_model(bytes: &[u8]) -> Result<DanModel> {
    if bytes.len() < 14 || &bytes[..4] != MAGIC {
        return Err(Error::FormatViolation("not a DANM checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::FormatViolation(format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    let config: DanConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::FormatViolation(e.to_string()))?;
    config.validate()?;
    let mut params = DanParams::zeros(&config);
    let mut run_mean = ndarray::Array1::zeros(config.n_filters());
    let mut run_var = ndarray::Array1::zeros(config.n_filters());
    {
        let [w_s, b_s, gamma, beta, w_1, b_1, w_2, b_2] = params.slices_mut();
        r.fill(w_s)?;
        r.fill(b_s)?;
        r.fill(gamma)?;
        r.fill(beta)?;
        r.fill(run_mean.as_slice_mut().expect("standard layout"))?;
        r.fill(run_var.as_slice_mut().expect("standard layout"))?;
        r.fill(w_1)?;
        r.fill(b_1)?;
        r.fill(w_2)?;
        r.fill(b_2)?;
    }
    if r.pos != body.len() {
        return Err(Error::FormatViolation("trailing bytes in checkpoint".into()));
    }
    let model = DanModel {
        params,
        run_mean,
        run_var,
        config,
        mode: Mode::Infer,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &DanModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DanModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

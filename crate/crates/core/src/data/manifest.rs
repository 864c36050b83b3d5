use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parieto-occipital channels used for decoding.
pub const OCCIPITAL_CHANNELS: [&str; 8] = ["PO3", "PO4", "PO5", "PO6", "POz", "O1", "O2", "Oz"];

/// Where a dataset lives and how its raw recordings are preprocessed.
///
/// `path_template` is resolved by replacing `{subject}` with a subject id;
/// relative templates are resolved against the manifest file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub subject_ids: Vec<String>,
    pub path_template: String,
    pub fs_raw: f64,
    #[serde(default)]
    pub onset_offset_s: f64,
    pub latency_s: f64,
    pub window_s: f64,
    #[serde(default)]
    pub channel_subset: Vec<String>,
    /// Power-line notch centre; `None` disables the notch.
    #[serde(default)]
    pub notch_hz: Option<f64>,
    #[serde(default = "default_notch_q")]
    pub notch_q: f64,
    #[serde(default = "default_decim")]
    pub decim_factor: usize,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_notch_q() -> f64 {
    35.0
}

fn default_decim() -> usize {
    1
}

impl DatasetManifest {
    /// 40-target benchmark recordings: 64 channels at 1 kHz, stored with the
    /// stimulus onset at sample 0.
    pub fn benchmark(path_template: &str) -> Self {
        DatasetManifest {
            subject_ids: (1..=35).map(|i| i.to_string()).collect(),
            path_template: path_template.into(),
            fs_raw: 1000.0,
            onset_offset_s: 0.0,
            latency_s: 0.14,
            window_s: 1.5,
            channel_subset: OCCIPITAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            notch_hz: Some(50.0),
            notch_q: 35.0,
            decim_factor: 4,
            base_dir: None,
        }
    }

    /// 12-target wearable recordings: 8 channels at 1 kHz with stimulus
    /// onset 0.5 s into each stored trial.
    pub fn wearable(path_template: &str) -> Self {
        DatasetManifest {
            subject_ids: (1..=102).map(|i| i.to_string()).collect(),
            onset_offset_s: 0.5,
            ..Self::benchmark(path_template)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_ids.is_empty() {
            return Err(Error::config("subject_ids", "must not be empty"));
        }
        if !(self.fs_raw > 0.0 && self.fs_raw.is_finite()) {
            return Err(Error::config("fs_raw", "must be positive"));
        }
        if !(self.latency_s >= 0.0) {
            return Err(Error::config("latency_s", "must be >= 0"));
        }
        if !(self.onset_offset_s >= 0.0) {
            return Err(Error::config("onset_offset_s", "must be >= 0"));
        }
        if !(self.window_s > 0.0) {
            return Err(Error::config("window_s", "must be > 0"));
        }
        if self.decim_factor < 1 {
            return Err(Error::config("decim_factor", "must be >= 1"));
        }
        let ratio = self.fs_raw / self.decim_factor as f64;
        if ratio.fract() != 0.0 {
            return Err(Error::config(
                "decim_factor",
                format!("{} Hz is not divisible by {}", self.fs_raw, self.decim_factor),
            ));
        }
        if let Some(f) = self.notch_hz {
            if !(f > 0.0 && f < self.fs_raw / 2.0) {
                return Err(Error::config("notch_hz", "must lie in (0, fs_raw/2)"));
            }
            if !(self.notch_q > 0.0) {
                return Err(Error::config("notch_q", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: DatasetManifest =
            toml::from_str(s).map_err(|e| Error::config("manifest", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_toml_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn path_for(&self, subject: &str) -> PathBuf {
        let p = PathBuf::from(self.path_template.replace("{subject}", subject));
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }

    /// Sampling rate after decimation.
    pub fn fs(&self) -> f64 {
        self.fs_raw / self.decim_factor as f64
    }
}

/// Benchmark stimulus table: 40 targets, 8.0–15.8 Hz in 0.2 Hz steps,
/// phases advancing by π/2 (mod 2π).
pub fn benchmark_stimuli() -> (Vec<f64>, Vec<f64>) {
    (0..40)
        .map(|k| {
            (
                (80 + 2 * k) as f64 / 10.0,
                (k % 4) as f64 * FRAC_PI_2,
            )
        })
        .unzip()
}

/// Wearable stimulus table: 12 targets, 9.25–14.75 Hz in 0.5 Hz steps,
/// phases advancing by π/2 (mod 2π).
pub fn wearable_stimuli() -> (Vec<f64>, Vec<f64>) {
    (0..12)
        .map(|k| (9.25 + 0.5 * k as f64, (k % 4) as f64 * FRAC_PI_2))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_table() {
        let (f, p) = benchmark_stimuli();
        assert_eq!(f.len(), 40);
        assert_eq!(f[0], 8.0);
        assert_eq!(f[1], 8.2);
        assert_eq!(f[39], 15.8);
        assert_eq!(p[1], 0.5 * std::f64::consts::PI);
    }

    #[test]
    fn wearable_table() {
        let (f, p) = wearable_stimuli();
        assert_eq!(f.len(), 12);
        assert_eq!(f[0], 9.25);
        assert_eq!(f[11], 14.75);
        assert_eq!(p[2], std::f64::consts::PI);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let m = DatasetManifest::wearable("wet/S{subject}.epoc");
        let text = toml::to_string(&m).unwrap();
        let back = DatasetManifest::from_toml_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fs(), 250.0);
        assert_eq!(back.path_for("7"), PathBuf::from("wet/S7.epoc"));

        let bad = text.replace("decim_factor = 4", "decim_factor = 3");
        let err = DatasetManifest::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("decim_factor"), "{err}");
        let bad = text.replace("latency_s = 0.14", "latency_s = -0.1");
        assert!(DatasetManifest::from_toml_str(&bad).is_err());
    }
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use ssvep_align_core::align::DanConfig;
use ssvep_align_core::data::{DatasetManifest, SynthConfig};
use ssvep_align_core::decode::DecodeConfig;
use ssvep_align_core::eval::TaskSpec;
use ssvep_align_core::Error;

/// Everything a run can be configured with. Every section is optional and
/// falls back to its defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: Option<SynthConfig>,
    /// Source cohort; defaults to the target cohort.
    pub source: Option<DatasetManifest>,
    pub target: Option<DatasetManifest>,
    pub dan: DanConfig,
    pub task: TaskSpec,
    pub decode: DecodeConfig,
    pub output: OutputConfig,
    /// Default log filter when `SSVEP_ALIGN_LOG` is unset.
    pub verbosity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, Error> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("config", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::config(field, e.into_inner().message().trim().to_string())
        })
    }

    /// Reads `path`; relative manifest templates resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf);
        for m in [cfg.source.as_mut(), cfg.target.as_mut()].into_iter().flatten() {
            m.base_dir = base.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Checks the ranges of every section that is present.
    pub fn validate(&self) -> std::result::Result<(), Error> {
        let prefix = |section: &str, e: Error| match e {
            Error::InvalidConfig { field, reason } => Error::config(format!("{section}.{field}"), reason),
            other => other,
        };
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| prefix("synth", e))?;
        }
        if let Some(m) = &self.source {
            m.validate().map_err(|e| prefix("source", e))?;
        }
        if let Some(m) = &self.target {
            m.validate().map_err(|e| prefix("target", e))?;
        }
        validate_dan(&self.dan)?;
        self.task.validate()?;
        self.decode.validate()?;
        Ok(())
    }
}

/// Hyperparameter ranges; shapes are filled in from the data later.
fn validate_dan(d: &DanConfig) -> std::result::Result<(), Error> {
    if !(d.learning_rate > 0.0 && d.learning_rate.is_finite()) {
        return Err(Error::config("dan.learning_rate", "must be > 0"));
    }
    if d.batch_size == 0 {
        return Err(Error::config("dan.batch_size", "must be >= 1"));
    }
    if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
        return Err(Error::config("dan.val_fraction", "must lie in (0, 1)"));
    }
    if !(d.bn_eps > 0.0) {
        return Err(Error::config("dan.bn_eps", "must be > 0"));
    }
    if !(d.bn_momentum > 0.0 && d.bn_momentum <= 1.0) {
        return Err(Error::config("dan.bn_momentum", "must lie in (0, 1]"));
    }
    Ok(())
}

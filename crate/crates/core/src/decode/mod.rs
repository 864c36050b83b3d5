//! Filter-bank ensemble TRCA.
//!
//! For every sub-band `m` and stimulus `k` a spatial filter maximising the
//! inter-trial covariance of the band-filtered calibration trials is found.
//! A test trial is projected with the ensemble of all stimuli's filters and
//! correlated against each projected template; band scores are combined
//! with weights `a(m) = m^-1.25 + 0.25`.

mod trca;

pub use trca::{
    accuracy, band_weight, leading_filter, trca_classify, trca_fit, trca_matrices, TrcaModel,
    DEFAULT_BANDS,
};

use serde::{Deserialize, Serialize};

use crate::dsp::{design_filterbank, FilterBank, BANK_BASE_LOW, BANK_HIGH_EDGE};
use crate::error::{Error, Result};

/// Filter-bank layout used by the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub n_bands: usize,
    pub base_low: f64,
    pub high_edge: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            n_bands: DEFAULT_BANDS,
            base_low: BANK_BASE_LOW,
            high_edge: BANK_HIGH_EDGE,
        }
    }
}

impl DecodeConfig {
    /// 40-target benchmark recordings.
    pub fn benchmark() -> Self {
        DecodeConfig::default()
    }

    /// 12-target wearable recordings.
    pub fn wearable() -> Self {
        DecodeConfig {
            n_bands: 3,
            ..DecodeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bands == 0 {
            return Err(Error::config("decode.n_bands", "must be >= 1"));
        }
        if !(self.base_low > 0.0) {
            return Err(Error::config("decode.base_low", "must be > 0"));
        }
        if !(self.high_edge > self.n_bands as f64 * self.base_low) {
            return Err(Error::config(
                "decode.high_edge",
                "must exceed the lower edge of the last band",
            ));
        }
        Ok(())
    }

    /// Plans the bank for trials of `n_samples` samples at `fs`.
    pub fn bank(&self, fs: f64, n_samples: usize) -> Result<FilterBank> {
        self.validate()?;
        let specs = design_filterbank(fs, self.n_bands, self.base_low, self.high_edge)?;
        FilterBank::new(&specs, n_samples)
    }
}

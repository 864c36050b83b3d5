//! Filtering and spectral estimation on epoch sets.

mod fir;
mod iir;
mod welch;

use ndarray::{s, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{extract_window, select_channels, DatasetManifest, EpochSet};
use crate::error::{Error, Result};

pub use fir::{design_bandpass, design_lowpass, gain_at, FirPlan};
pub use iir::Biquad;
pub use welch::{psd_welch, Spectrum};

/// Default filter-bank lower-edge step (Hz).
pub const BANK_BASE_LOW: f64 = 8.0;
/// Default filter-bank upper edge (Hz).
pub const BANK_HIGH_EDGE: f64 = 88.0;
/// Default notch quality factor.
pub const NOTCH_Q: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Notch,
    Lowpass,
    Bandpass,
}

/// Filter description. `f_low` is the notch centre, the low-pass cutoff or
/// the band-pass lower edge; `f_high` is only used by band-pass filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub f_low: f64,
    pub f_high: f64,
    pub fs: f64,
    pub order_or_taps: usize,
    pub notch_q: f64,
}

impl FilterSpec {
    pub fn bandpass(f_low: f64, f_high: f64, fs: f64, taps: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            f_low,
            f_high,
            fs,
            order_or_taps: taps,
            notch_q: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyq = self.fs / 2.0;
        if !(self.f_low > 0.0 && self.f_low < nyq) {
            return Err(Error::FrequencyOutOfRange {
                freq: self.f_low,
                nyquist: nyq,
            });
        }
        match self.kind {
            FilterKind::Bandpass => {
                if !(self.f_high > self.f_low && self.f_high < nyq) {
                    return Err(Error::EdgeAboveNyquist {
                        edge: self.f_high,
                        nyquist: nyq,
                    });
                }
                if self.order_or_taps % 2 == 0 {
                    return Err(Error::config("order_or_taps", "FIR tap count must be odd"));
                }
            }
            FilterKind::Lowpass => {
                if self.order_or_taps % 2 == 0 {
                    return Err(Error::config("order_or_taps", "FIR tap count must be odd"));
                }
            }
            FilterKind::Notch => {
                if !(self.notch_q > 0.0) {
                    return Err(Error::config("notch_q", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// FIR kernel for low-pass and band-pass specs.
    pub fn kernel(&self) -> Result<Vec<f64>> {
        self.validate()?;
        match self.kind {
            FilterKind::Bandpass => Ok(design_bandpass(
                self.f_low,
                self.f_high,
                self.fs,
                self.order_or_taps,
            )),
            FilterKind::Lowpass => Ok(design_lowpass(self.f_low, self.fs, self.order_or_taps)),
            FilterKind::Notch => Err(Error::config("kind", "notch has no FIR kernel")),
        }
    }
}

/// Default FIR length: one second of data, made odd (251 taps at 250 Hz).
pub fn default_taps(fs: f64) -> usize {
    2 * (fs / 2.0).floor() as usize + 1
}

fn map_signals(epochs: &EpochSet, n_out: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Array3<f64> {
    let (n, c, _) = epochs.trials.dim();
    let mut out = Array3::zeros((n, c, n_out));
    for t in 0..n {
        for ch in 0..c {
            let row = epochs.trials.slice(s![t, ch, ..]).to_vec();
            let y = f(&row);
            out.slice_mut(s![t, ch, ..])
                .assign(&ndarray::ArrayView1::from(&y[..n_out]));
        }
    }
    out
}

/// Zero-phase biquad notch at `f0` on every channel of every trial.
pub fn apply_notch(epochs: &EpochSet, f0: f64, q: f64) -> Result<EpochSet> {
    let nyq = epochs.fs / 2.0;
    if !(f0 > 0.0 && f0 < nyq) {
        return Err(Error::FrequencyOutOfRange { freq: f0, nyquist: nyq });
    }
    if !(q > 0.0) {
        return Err(Error::config("notch_q", "must be positive"));
    }
    let bq = Biquad::notch(f0, q, epochs.fs);
    Ok(epochs.with_trials(map_signals(epochs, epochs.n_samples(), |x| bq.filtfilt(x))))
}

/// Anti-alias low-pass at 80 % of the new Nyquist, then keep every
/// `factor`-th sample.
pub fn decimate(epochs: &EpochSet, factor: usize) -> Result<EpochSet> {
    if factor == 0 {
        return Err(Error::InvalidFactor);
    }
    if factor == 1 {
        return Ok(epochs.clone());
    }
    let cutoff = 0.8 * epochs.fs / (2.0 * factor as f64);
    let kernel = design_lowpass(cutoff, epochs.fs, 30 * factor + 1);
    let n = epochs.n_samples();
    let n_out = n.div_ceil(factor);
    let plan = FirPlan::new(&[kernel], n);
    let trials = map_signals(epochs, n_out, |x| {
        plan.apply(0, x).into_iter().step_by(factor).collect()
    });
    let mut out = epochs.with_trials(trials);
    out.fs = epochs.fs / factor as f64;
    Ok(out)
}

/// Raw recording to analysis epochs: notch, decimation, channel selection
/// and windowing, in that order.
pub fn preprocess(raw: &EpochSet, manifest: &DatasetManifest) -> Result<EpochSet> {
    manifest.validate()?;
    if (raw.fs - manifest.fs_raw).abs() > 1e-9 * manifest.fs_raw {
        return Err(Error::SampleRateMismatch {
            filter_fs: manifest.fs_raw,
            data_fs: raw.fs,
        });
    }
    let mut e = match manifest.notch_hz {
        Some(f0) => apply_notch(raw, f0, manifest.notch_q)?,
        None => raw.clone(),
    };
    e = decimate(&e, manifest.decim_factor)?;
    if !manifest.channel_subset.is_empty() {
        e = select_channels(&e, &manifest.channel_subset)?;
    }
    extract_window(&e, manifest.latency_s, manifest.window_s, manifest.onset_offset_s)
}

/// Sub-band `m` (1-based) passes `[m * base_low, high_edge]`.
pub fn design_filterbank(
    fs: f64,
    n_bands: usize,
    base_low: f64,
    high_edge: f64,
) -> Result<Vec<FilterSpec>> {
    if n_bands == 0 {
        return Err(Error::InvalidBandCount);
    }
    let nyq = fs / 2.0;
    if !(high_edge < nyq) || !(n_bands as f64 * base_low < high_edge) || !(base_low > 0.0) {
        return Err(Error::EdgeAboveNyquist {
            edge: high_edge,
            nyquist: nyq,
        });
    }
    let taps = default_taps(fs);
    Ok((1..=n_bands)
        .map(|m| FilterSpec::bandpass(m as f64 * base_low, high_edge, fs, taps))
        .collect())
}

/// Linear-phase band-pass with group-delay compensation.
pub fn apply_bandpass(epochs: &EpochSet, spec: &FilterSpec) -> Result<EpochSet> {
    if spec.fs != epochs.fs {
        return Err(Error::SampleRateMismatch {
            filter_fs: spec.fs,
            data_fs: epochs.fs,
        });
    }
    let plan = FirPlan::new(&[spec.kernel()?], epochs.n_samples());
    Ok(epochs.with_trials(map_signals(epochs, epochs.n_samples(), |x| plan.apply(0, x))))
}

/// A filter bank planned for trials of a fixed length.
#[derive(Clone)]
pub struct FilterBank {
    specs: Vec<FilterSpec>,
    plan: FirPlan,
}

impl FilterBank {
    pub fn new(specs: &[FilterSpec], n_samples: usize) -> Result<Self> {
        let kernels = specs.iter().map(FilterSpec::kernel).collect::<Result<Vec<_>>>()?;
        Ok(FilterBank {
            specs: specs.to_vec(),
            plan: FirPlan::new(&kernels, n_samples),
        })
    }

    pub fn specs(&self) -> &[FilterSpec] {
        &self.specs
    }

    pub fn n_bands(&self) -> usize {
        self.specs.len()
    }

    pub fn n_samples(&self) -> usize {
        self.plan.len()
    }

    /// Band-filtered copies of one `[channels, samples]` trial, one per band.
    pub fn apply(&self, trial: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let rows: Vec<Vec<f64>> = trial.rows().into_iter().map(|r| r.to_vec()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        self.plan
            .apply_all(&refs)
            .into_iter()
            .map(|band| {
                let n = self.plan.len();
                Array2::from_shape_vec((band.len(), n), band.into_iter().flatten().collect())
                    .expect("band output shape")
            })
            .collect()
    }
}

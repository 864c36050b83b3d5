//! Epoch containers, file I/O, windowing, channel selection, calibration
//! splits and the synthetic SSVEP generator.

mod epoc;
mod manifest;
mod ops;
mod synth;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use epoc::{decode_epochs, encode_epochs, load_epochs, read_epochs, save_epochs};
pub use manifest::{benchmark_stimuli, wearable_stimuli, DatasetManifest, OCCIPITAL_CHANNELS};
pub use ops::{
    extract_window, select_channels, split_calibration_test, split_indices, time_to_samples,
    SplitOrder,
};
pub use synth::{synth_generate, SynthConfig, SynthOutput, NOISELESS_SNR_DB};

/// Minimum number of calibration trials per stimulus (an averaged template
/// needs at least two trials).
pub const MIN_CALIB_TRIALS: usize = 2;

/// Labeled, rectangular collection of multichannel trials.
///
/// `trials` is `[n_trials, n_channels, n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub trials: Array3<f64>,
    pub labels: Vec<usize>,
    pub stim_freqs: Vec<f64>,
    pub stim_phases: Vec<f64>,
    pub fs: f64,
    pub subject_id: String,
    pub channel_names: Vec<String>,
}

impl EpochSet {
    /// Builds a set and checks every invariant.
    pub fn new(
        trials: Array3<f64>,
        labels: Vec<usize>,
        stim_freqs: Vec<f64>,
        stim_phases: Vec<f64>,
        fs: f64,
        subject_id: impl Into<String>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let set = EpochSet {
            trials,
            labels,
            stim_freqs,
            stim_phases,
            fs,
            subject_id: subject_id.into(),
            channel_names,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEpochs(m));
        if self.labels.len() != self.n_trials() {
            return bad(format!(
                "{} labels for {} trials",
                self.labels.len(),
                self.n_trials()
            ));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.stim_freqs.len()) {
            return bad(format!(
                "label {l} out of range for {} stimuli",
                self.stim_freqs.len()
            ));
        }
        if self.stim_phases.len() != self.stim_freqs.len() {
            return bad(format!(
                "{} phases for {} frequencies",
                self.stim_phases.len(),
                self.stim_freqs.len()
            ));
        }
        if self.channel_names.len() != self.n_channels() {
            return bad(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.n_channels()
            ));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("sampling rate {} must be positive", self.fs));
        }
        if self.trials.iter().any(|v| !v.is_finite()) {
            return bad("non-finite sample value".into());
        }
        Ok(())
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len_of(Axis(0))
    }

    pub fn n_channels(&self) -> usize {
        self.trials.len_of(Axis(1))
    }

    pub fn n_samples(&self) -> usize {
        self.trials.len_of(Axis(2))
    }

    pub fn n_stimuli(&self) -> usize {
        self.stim_freqs.len()
    }

    pub fn trial(&self, i: usize) -> ArrayView2<'_, f64> {
        self.trials.slice(s![i, .., ..])
    }

    /// Trial indices of stimulus `k`, in file order.
    pub fn indices_of(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of trials per stimulus.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_stimuli()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Mean of the trials of stimulus `k`, or `None` when it has none.
    pub fn template(&self, k: usize) -> Option<Array2<f64>> {
        let idx = self.indices_of(k);
        if idx.is_empty() {
            return None;
        }
        let mut acc = Array2::zeros((self.n_channels(), self.n_samples()));
        for &i in &idx {
            acc += &self.trial(i);
        }
        acc /= idx.len() as f64;
        Some(acc)
    }

    /// New set holding the given trials (in the given order).
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            trials: self.trials.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            stim_freqs: self.stim_freqs.clone(),
            stim_phases: self.stim_phases.clone(),
            fs: self.fs,
            subject_id: self.subject_id.clone(),
            channel_names: self.channel_names.clone(),
        }
    }

    /// Same metadata, different trial tensor.
    pub fn with_trials(&self, trials: Array3<f64>) -> EpochSet {
        EpochSet {
            trials,
            labels: self.labels.clone(),
            stim_freqs: self.stim_freqs.clone(),
            stim_phases: self.stim_phases.clone(),
            fs: self.fs,
            subject_id: self.subject_id.clone(),
            channel_names: self.channel_names.clone(),
        }
    }

    /// Appends the trials of `others` to `self`. Shapes and stimulus tables
    /// must agree; the subject id of `self` is kept.
    pub fn concat(&self, others: &[&EpochSet]) -> Result<EpochSet> {
        let mut views = vec![self.trials.view()];
        let mut labels = self.labels.clone();
        for o in others {
            if o.n_channels() != self.n_channels() || o.n_samples() != self.n_samples() {
                return Err(Error::ShapeMismatch(format!(
                    "cannot concatenate {}x{} trials onto {}x{}",
                    o.n_channels(),
                    o.n_samples(),
                    self.n_channels(),
                    self.n_samples()
                )));
            }
            if o.n_stimuli() != self.n_stimuli() {
                return Err(Error::StimulusMismatch(format!(
                    "{} vs {} stimuli",
                    o.n_stimuli(),
                    self.n_stimuli()
                )));
            }
            views.push(o.trials.view());
            labels.extend_from_slice(&o.labels);
        }
        let trials = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(EpochSet {
            trials,
            labels,
            ..self.with_trials(Array3::zeros((0, 0, 0)))
        })
    }
}

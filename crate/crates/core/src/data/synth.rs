//! Synthetic SSVEP subjects with known cross-subject structure.
//!
//! Every subject observes the same latent harmonic sources through its own
//! mixing matrix: `trial = M_s · L_k + noise`, where `L_k` stacks
//! `sin(2π h f_k t + h φ_k) / h` and `cos(...) / h` for `h = 1..=n_harmonics`.
//! Noise is an AR(1) process (coefficient 0.9) plus white noise, scaled per
//! trial to the requested signal-to-noise ratio.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::OCCIPITAL_CHANNELS;
use super::EpochSet;
use crate::error::{Error, Result};
use crate::rng;

/// At or above this SNR the generator adds no noise at all.
pub const NOISELESS_SNR_DB: f64 = 200.0;

const AR_COEF: f64 = 0.9;
const MAX_CONDITION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub freqs: Vec<f64>,
    pub phases: Vec<f64>,
    pub n_trials_per_stim: usize,
    pub fs: f64,
    pub window_s: f64,
    pub n_channels: usize,
    pub n_harmonics: usize,
    pub snr_db: f64,
    pub mixing_seed: u64,
    pub noise_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 5,
            freqs: (0..8).map(|k| 8.0 + k as f64).collect(),
            phases: (0..8).map(|k| (k % 4) as f64 * 0.5 * PI).collect(),
            n_trials_per_stim: 6,
            fs: 250.0,
            window_s: 1.5,
            n_channels: 8,
            n_harmonics: 3,
            snr_db: 0.0,
            mixing_seed: 1,
            noise_seed: 2,
        }
    }
}

impl SynthConfig {
    pub fn n_stimuli(&self) -> usize {
        self.freqs.len()
    }

    pub fn n_samples(&self) -> usize {
        super::time_to_samples(self.window_s, self.fs)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, r: &str| Err(Error::config(f, r));
        if self.n_subjects == 0 {
            return fail("n_subjects", "must be >= 1");
        }
        if self.freqs.is_empty() {
            return fail("freqs", "must not be empty");
        }
        if self.phases.len() != self.freqs.len() {
            return fail("phases", "must have one entry per frequency");
        }
        if self.freqs.iter().any(|&f| !(f > 0.0)) {
            return fail("freqs", "must be strictly positive");
        }
        if self.n_harmonics == 0 {
            return fail("n_harmonics", "must be >= 1");
        }
        if !(self.fs > 0.0) {
            return fail("fs", "must be positive");
        }
        let fmax = self.freqs.iter().cloned().fold(0.0, f64::max);
        if self.n_harmonics as f64 * fmax >= self.fs / 2.0 {
            return fail("n_harmonics", "highest harmonic must stay below fs/2");
        }
        if self.n_trials_per_stim == 0 {
            return fail("n_trials_per_stim", "must be >= 1");
        }
        if self.n_channels == 0 {
            return fail("n_channels", "must be >= 1");
        }
        if self.n_samples() == 0 {
            return fail("window_s", "must cover at least one sample");
        }
        if self.snr_db.is_nan() {
            return fail("snr_db", "must be a number");
        }
        Ok(())
    }
}

/// Generated subjects plus the ground-truth mixing matrices
/// (`[n_channels, 2 * n_harmonics]`, one per subject).
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub subjects: Vec<EpochSet>,
    pub mixing: Vec<Array2<f64>>,
    /// Latent source rows per stimulus, `[2 * n_harmonics, n_samples]`.
    pub latents: Vec<Array2<f64>>,
}

/// Channel labels for a synthetic montage.
fn channel_names(n: usize) -> Vec<String> {
    const EXTENDED_64: [&str; 64] = [
        "FP1", "FPZ", "FP2", "AF3", "AF4", "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8",
        "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8", "T7", "C5", "C3", "C1",
        "CZ", "C2", "C4", "C6", "T8", "M1", "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6",
        "TP8", "M2", "P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8", "PO7", "PO5", "PO3",
        "POz", "PO4", "PO6", "PO8", "CB1", "O1", "Oz", "O2", "CB2",
    ];
    if n <= OCCIPITAL_CHANNELS.len() {
        OCCIPITAL_CHANNELS[..n].iter().map(|s| s.to_string()).collect()
    } else if n == 64 {
        EXTENDED_64.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("Ch{i}")).collect()
    }
}

fn latent(cfg: &SynthConfig, k: usize) -> Array2<f64> {
    let h = cfg.n_harmonics;
    let n = cfg.n_samples();
    let (f, phi) = (cfg.freqs[k], cfg.phases[k]);
    Array2::from_shape_fn((2 * h, n), |(r, i)| {
        let harm = (r / 2 + 1) as f64;
        let arg = 2.0 * PI * harm * f * (i as f64 / cfg.fs) + harm * phi;
        if r % 2 == 0 {
            arg.sin() / harm
        } else {
            arg.cos() / harm
        }
    })
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// `U · diag(s) · Vᵀ` with singular values in `[1/MAX_CONDITION, 1]`.
fn mixing_matrix(rows: usize, cols: usize, rng: &mut rng::Rng) -> Array2<f64> {
    let r = rows.min(cols);
    let u = orthonormal_columns(rows, r, rng);
    let v = orthonormal_columns(cols, r, rng);
    let mut s: Vec<f64> = (0..r)
        .map(|_| rng.gen_range(1.0 / MAX_CONDITION..=1.0))
        .collect();
    s[0] = 1.0;
    let m = u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose();
    Array2::from_shape_fn((rows, cols), |(i, j)| m[(i, j)])
}

fn noise(c: usize, n: usize, rng: &mut rng::Rng) -> Array2<f64> {
    let ar_std = 1.0 / (1.0 - AR_COEF * AR_COEF).sqrt();
    let mut out = Array2::zeros((c, n));
    for ch in 0..c {
        let z: f64 = StandardNormal.sample(rng);
        let mut ar = ar_std * z;
        for i in 0..n {
            if i > 0 {
                let e: f64 = StandardNormal.sample(rng);
                ar = AR_COEF * ar + e;
            }
            let w: f64 = StandardNormal.sample(rng);
            out[[ch, i]] = ar / ar_std + w;
        }
    }
    out
}

/// Generates `n_subjects` subjects, trials ordered block by block
/// (each block holds one trial per stimulus).
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let n_stim = cfg.n_stimuli();
    let n = cfg.n_samples();
    let c = cfg.n_channels;
    let latents: Vec<Array2<f64>> = (0..n_stim).map(|k| latent(cfg, k)).collect();
    let names = channel_names(c);

    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut mixing = Vec::with_capacity(cfg.n_subjects);
    for s in 0..cfg.n_subjects {
        let mut mrng = rng::stream(cfg.mixing_seed, &[rng::tag("mixing"), s as u64]);
        let m = mixing_matrix(c, 2 * cfg.n_harmonics, &mut mrng);
        let clean: Vec<Array2<f64>> = latents.iter().map(|l| m.dot(l)).collect();
        let mut nrng = rng::stream(cfg.noise_seed, &[rng::tag("noise"), s as u64]);
        let total = n_stim * cfg.n_trials_per_stim;
        let mut trials = Array3::zeros((total, c, n));
        let mut labels = Vec::with_capacity(total);
        for t in 0..total {
            let k = t % n_stim;
            let mut trial = clean[k].clone();
            if cfg.snr_db < NOISELESS_SNR_DB {
                let nz = noise(c, n, &mut nrng);
                let p_sig = trial.mapv(|v| v * v).mean().unwrap_or(0.0);
                let p_noise = nz.mapv(|v| v * v).mean().unwrap_or(0.0);
                if p_noise > 0.0 {
                    let scale = (p_sig / p_noise / 10f64.powf(cfg.snr_db / 10.0)).sqrt();
                    trial.scaled_add(scale, &nz);
                }
            }
            trials.slice_mut(ndarray::s![t, .., ..]).assign(&trial);
            labels.push(k);
        }
        subjects.push(EpochSet::new(
            trials,
            labels,
            cfg.freqs.clone(),
            cfg.phases.clone(),
            cfg.fs,
            format!("synth{:02}", s + 1),
            names.clone(),
        )?);
        mixing.push(m);
    }
    Ok(SynthOutput {
        subjects,
        mixing,
        latents,
    })
}

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    /// `freq,power` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq,power\n");
        for (f, p) in self.freqs.iter().zip(&self.power) {
            let _ = writeln!(s, "{f},{p}");
        }
        s
    }

    /// Index of the bin closest to `f`.
    pub fn nearest_bin(&self, f: f64) -> usize {
        (f / self.resolution).round() as usize
    }

    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    /// Element-wise mean of spectra sharing one frequency axis.
    pub fn mean(spectra: &[Spectrum]) -> Option<Spectrum> {
        let first = spectra.first()?;
        let mut power = vec![0.0; first.power.len()];
        for s in spectra {
            for (a, b) in power.iter_mut().zip(&s.power) {
                *a += b;
            }
        }
        power.iter_mut().for_each(|p| *p /= spectra.len() as f64);
        Some(Spectrum {
            power,
            ..first.clone()
        })
    }
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
/// `overlap` is the fraction of `seg_len` shared by consecutive segments.
pub fn psd_welch(signal: &[f64], fs: f64, seg_len: usize, overlap: f64) -> Result<Spectrum> {
    if seg_len == 0 || seg_len > signal.len() {
        return Err(Error::SegmentTooLong {
            seg_len,
            len: signal.len(),
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("overlap", "must lie in [0, 1)"));
    }
    if !(fs > 0.0) {
        return Err(Error::config("fs", "must be positive"));
    }
    let step = (seg_len - (overlap * seg_len as f64).round() as usize).max(1);
    let n_seg = 1 + (signal.len() - seg_len) / step;
    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg_len as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut power = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); seg_len];
    for s in 0..n_seg {
        let seg = &signal[s * step..s * step + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
    }
    let scale = 1.0 / (fs * wss * n_seg as f64);
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = k != 0 && !(seg_len % 2 == 0 && k == seg_len / 2);
        *p *= scale * if one_sided { 2.0 } else { 1.0 };
    }
    let resolution = fs / seg_len as f64;
    Ok(Spectrum {
        freqs: (0..n_bins).map(|k| k as f64 * resolution).collect(),
        power,
        resolution,
    })
}

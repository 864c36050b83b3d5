//! Linear-phase FIR design and zero-phase application.
//!
//! Kernels are Hamming-windowed sincs. Application pads each signal by odd
//! reflection, convolves in the frequency domain and removes the group delay,
//! so outputs are time-aligned with inputs. Two real channels are filtered per
//! complex FFT (real kernels keep them in separate parts).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    if len == 1 {
        return 1.0;
    }
    0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()
}

/// Unnormalised windowed-sinc low-pass with cutoff `fc` (Hz).
fn windowed_lowpass(fc: f64, fs: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let w = 2.0 * fc / fs;
    (0..taps)
        .map(|n| w * sinc(w * (n as f64 - m)) * hamming(n, taps))
        .collect()
}

/// Magnitude of the kernel's frequency response at `f` Hz.
pub fn gain_at(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &h)| {
        (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin())
    });
    (re * re + im * im).sqrt()
}

/// Low-pass kernel with unit DC gain.
pub fn design_lowpass(cutoff: f64, fs: f64, taps: usize) -> Vec<f64> {
    let mut h = windowed_lowpass(cutoff, fs, taps);
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Band-pass kernel (difference of low-passes) with unit gain at the band
/// centre.
pub fn design_bandpass(f_low: f64, f_high: f64, fs: f64, taps: usize) -> Vec<f64> {
    let hi = windowed_lowpass(f_high, fs, taps);
    let lo = windowed_lowpass(f_low, fs, taps);
    let mut h: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
    let g = gain_at(&h, 0.5 * (f_low + f_high), fs);
    h.iter_mut().for_each(|v| *v /= g);
    h
}

/// Odd (point) reflection of `x` by `pad` samples on each side.
pub(crate) fn odd_reflect(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    out
}

/// One or more FIR kernels prepared for signals of a fixed length.
#[derive(Clone)]
pub struct FirPlan {
    n: usize,
    pad: usize,
    nfft: usize,
    delays: Vec<usize>,
    kernels: Vec<Vec<Complex<f64>>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FirPlan {
    /// Plans every kernel in `bank` for signals of length `n`. All kernels
    /// must have odd length.
    pub fn new(bank: &[Vec<f64>], n: usize) -> Self {
        let max_taps = bank.iter().map(Vec::len).max().unwrap_or(1);
        let pad = max_taps.min(n.saturating_sub(1));
        // Outputs are read at indices >= pad + delay >= taps - 1, so circular
        // wrap-around from a transform shorter than the full linear
        // convolution never reaches them.
        let nfft = (n + 2 * pad).max(max_taps).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(nfft);
        let inverse = planner.plan_fft_inverse(nfft);
        let kernels = bank
            .iter()
            .map(|h| {
                let mut buf = vec![Complex::new(0.0, 0.0); nfft];
                for (b, &v) in buf.iter_mut().zip(h) {
                    b.re = v / nfft as f64;
                }
                forward.process(&mut buf);
                buf
            })
            .collect();
        FirPlan {
            n,
            pad,
            nfft,
            delays: bank.iter().map(|h| (h.len() - 1) / 2).collect(),
            kernels,
            forward,
            inverse,
        }
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Filters `signals` (each of the planned length) with every kernel.
    /// Result is indexed `[kernel][signal]`.
    pub fn apply_all(&self, signals: &[&[f64]]) -> Vec<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<Vec<f64>>> = (0..self.kernels.len())
            .map(|_| Vec::with_capacity(signals.len()))
            .collect();
        if self.n == 0 {
            for o in &mut out {
                o.extend(signals.iter().map(|_| Vec::new()));
            }
            return out;
        }
        let mut spec = vec![Complex::new(0.0, 0.0); self.nfft];
        let mut work = vec![Complex::new(0.0, 0.0); self.nfft];
        for pair in signals.chunks(2) {
            let a = odd_reflect(pair[0], self.pad);
            let b = pair.get(1).map(|s| odd_reflect(s, self.pad));
            spec.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, &v) in a.iter().enumerate() {
                spec[i].re = v;
            }
            if let Some(b) = &b {
                for (i, &v) in b.iter().enumerate() {
                    spec[i].im = v;
                }
            }
            self.forward.process(&mut spec);
            for (k, kernel) in self.kernels.iter().enumerate() {
                for ((w, s), h) in work.iter_mut().zip(&spec).zip(kernel) {
                    *w = s * h;
                }
                self.inverse.process(&mut work);
                let off = self.pad + self.delays[k];
                let seg = &work[off..off + self.n];
                out[k].push(seg.iter().map(|c| c.re).collect());
                if b.is_some() {
                    out[k].push(seg.iter().map(|c| c.im).collect());
                }
            }
        }
        out
    }

    pub fn apply(&self, kernel: usize, signal: &[f64]) -> Vec<f64> {
        self.apply_all(&[signal]).swap_remove(kernel).swap_remove(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-form reference: odd reflection, full convolution, delay crop.
    fn direct(h: &[f64], x: &[f64]) -> Vec<f64> {
        let pad = h.len().min(x.len() - 1);
        let ext = odd_reflect(x, pad);
        let d = (h.len() - 1) / 2;
        (0..x.len())
            .map(|i| {
                let c = i + pad + d;
                h.iter()
                    .enumerate()
                    .filter(|(j, _)| *j <= c && c - j < ext.len())
                    .map(|(j, &hj)| hj * ext[c - j])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_path_matches_direct_convolution() {
        let h = design_bandpass(8.0, 88.0, 250.0, 251);
        let x: Vec<f64> = (0..375).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let y: Vec<f64> = (0..375).map(|i| ((i * 13 % 17) as f64 - 8.0) * 0.1).collect();
        let plan = FirPlan::new(&[h.clone()], 375);
        let out = plan.apply_all(&[&x, &y]);
        for (sig, got) in [&x, &y].iter().zip(&out[0]) {
            let want = direct(&h, sig);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn short_signals_clip_padding() {
        let h = design_lowpass(20.0, 250.0, 31);
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let plan = FirPlan::new(&[h.clone()], 5);
        let got = plan.apply(0, &x);
        let want = direct(&h, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(FirPlan::new(&[h], 1).apply(0, &[3.0]).len(), 1);
    }

    #[test]
    fn kernel_gains() {
        let lp = design_lowpass(100.0, 1000.0, 121);
        assert!((gain_at(&lp, 0.0, 1000.0) - 1.0).abs() < 1e-12);
        let bp = design_bandpass(8.0, 88.0, 250.0, 251);
        assert!((gain_at(&bp, 48.0, 250.0) - 1.0).abs() < 1e-12);
        assert!(gain_at(&bp, 2.0, 250.0) < 0.01);
    }
}

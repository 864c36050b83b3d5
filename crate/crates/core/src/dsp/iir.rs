//! Biquad notch applied forward and backward.

use std::f64::consts::PI;

use super::fir::odd_reflect;

/// Normalised biquad coefficients (`a0 = 1`).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Notch at `f0` with quality factor `q`.
    pub fn notch(f0: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        let c = -2.0 * w0.cos();
        Biquad {
            b: [1.0 / a0, c / a0, 1.0 / a0],
            a: [1.0, c / a0, (1.0 - alpha) / a0],
        }
    }

    /// Steady-state transposed direct-form II state for a unit step.
    fn step_state(&self) -> [f64; 2] {
        let g = self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        let [mut z1, mut z2] = self.step_state().map(|z| z * x[0]);
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + z1;
            z1 = self.b[1] * xin - self.a[1] * y + z2;
            z2 = self.b[2] * xin - self.a[2] * y;
            *v = y;
        }
    }

    /// Samples for the impulse response envelope to fall below 1e-3.
    fn settle_len(&self) -> usize {
        let r = self.a[2].abs().sqrt();
        if r >= 1.0 {
            return usize::MAX;
        }
        if r == 0.0 {
            return 2;
        }
        ((1e-3f64).ln() / r.ln()).ceil() as usize
    }

    /// Zero-phase (forward-backward) filtering with odd-reflection padding
    /// long enough for the start-up transient to decay.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.settle_len().max(6).min(n - 1);
        let mut ext = odd_reflect(x, pad);
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

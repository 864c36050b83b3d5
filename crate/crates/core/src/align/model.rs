//! The alignment network: spatial convolution, batch normalisation and two
//! channel-wise fully connected layers.
//!
//! A batch of `N` trials `[C, S]` is processed as one `[C, N·S]` matrix:
//! every layer acts independently at each time point, and batch
//! normalisation pools each spatial filter's statistics over batch and time.
//!
//! ```text
//! Y1  = W_s · X + b_s                       [F, N·S]
//! Ŷ1  = γ ⊙ (Y1 − μ) / √(σ² + ε) + β        per filter row
//! Z   = act(W_1 · Ŷ1 + b_1)                 [H, N·S]
//! out = W_2 · Z + b_2                       [C', N·S]
//! ```
//!
//! In training mode `μ`, `σ²` are the batch statistics of `Y1`. Since `b_s`
//! shifts `Y1` and `μ` identically it cancels there, so the batch path
//! normalises `W_s · X` directly and `b_s` only enters through the running
//! mean used at inference.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::config::{Activation, DanConfig};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learnable tensors. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DanParams {
    /// `[F, C]`
    pub w_s: Array2<f64>,
    pub b_s: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    /// `[H, F]`
    pub w_1: Array2<f64>,
    pub b_1: Array1<f64>,
    /// `[C', H]`
    pub w_2: Array2<f64>,
    pub b_2: Array1<f64>,
}

impl DanParams {
    pub fn zeros(cfg: &DanConfig) -> Self {
        let (c, f, h, o) = (
            cfg.n_in_channels,
            cfg.n_filters(),
            cfg.hidden_dim(),
            cfg.n_out_channels,
        );
        DanParams {
            w_s: Array2::zeros((f, c)),
            b_s: Array1::zeros(f),
            gamma: Array1::zeros(f),
            beta: Array1::zeros(f),
            w_1: Array2::zeros((h, f)),
            b_1: Array1::zeros(h),
            w_2: Array2::zeros((o, h)),
            b_2: Array1::zeros(o),
        }
    }

    pub fn zeros_like(&self) -> Self {
        DanParams {
            w_s: Array2::zeros(self.w_s.raw_dim()),
            b_s: Array1::zeros(self.b_s.raw_dim()),
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
            w_1: Array2::zeros(self.w_1.raw_dim()),
            b_1: Array1::zeros(self.b_1.raw_dim()),
            w_2: Array2::zeros(self.w_2.raw_dim()),
            b_2: Array1::zeros(self.b_2.raw_dim()),
        }
    }

    pub const NAMES: [&'static str; 8] = ["w_s", "b_s", "gamma", "beta", "w_1", "b_1", "w_2", "b_2"];

    /// Tensors in the fixed order of [`DanParams::NAMES`].
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.w_s.as_slice().expect("standard layout"),
            self.b_s.as_slice().expect("standard layout"),
            self.gamma.as_slice().expect("standard layout"),
            self.beta.as_slice().expect("standard layout"),
            self.w_1.as_slice().expect("standard layout"),
            self.b_1.as_slice().expect("standard layout"),
            self.w_2.as_slice().expect("standard layout"),
            self.b_2.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_s.as_slice_mut().expect("standard layout"),
            self.b_s.as_slice_mut().expect("standard layout"),
            self.gamma.as_slice_mut().expect("standard layout"),
            self.beta.as_slice_mut().expect("standard layout"),
            self.w_1.as_slice_mut().expect("standard layout"),
            self.b_1.as_slice_mut().expect("standard layout"),
            self.w_2.as_slice_mut().expect("standard layout"),
            self.b_2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn same_shape(&self, other: &DanParams) -> bool {
        self.w_s.dim() == other.w_s.dim()
            && self.b_s.dim() == other.b_s.dim()
            && self.gamma.dim() == other.gamma.dim()
            && self.beta.dim() == other.beta.dim()
            && self.w_1.dim() == other.w_1.dim()
            && self.b_1.dim() == other.b_1.dim()
            && self.w_2.dim() == other.w_2.dim()
            && self.b_2.dim() == other.b_2.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Parameters, normalisation statistics and shape of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct DanModel {
    pub params: DanParams,
    pub run_mean: Array1<f64>,
    pub run_var: Array1<f64>,
    pub config: DanConfig,
    pub mode: Mode,
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    n_trials: usize,
    /// `[C, N·S]` inputs, kept to detect a mismatched backward call.
    x: Array2<f64>,
    /// Normalised spatial features `[F, N·S]`.
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    /// BN output `[F, N·S]`.
    y_bn: Array2<f64>,
    /// Activations `[H, N·S]`.
    z: Array2<f64>,
    /// Network output `[C', N·S]`.
    out: Array2<f64>,
    /// Batch mean of `W_s·X + b_s` and its biased variance.
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.out
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn batch_mean(&self) -> &Array1<f64> {
        &self.batch_mean
    }

    pub fn batch_var(&self) -> &Array1<f64> {
        &self.batch_var
    }

    /// Output of trial `i` of the batch.
    pub fn trial_output(&self, i: usize) -> ArrayView2<'_, f64> {
        let s = self.out.ncols() / self.n_trials;
        self.out.slice(s![.., i * s..(i + 1) * s])
    }
}

/// Horizontally stacks `[C, S]` trials into `[C, N·S]`.
pub fn stack_trials<'a>(trials: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = trials.into_iter().collect();
    if views.is_empty() {
        return Err(Error::Empty);
    }
    ndarray::concatenate(Axis(1), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

impl DanModel {
    /// Seeded initialisation: weights ~ U(±1/√fan_in), biases 0, γ = 1,
    /// β = 0, running mean 0 and variance 1.
    pub fn init(cfg: &DanConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, &[rng::tag("dan-init")]);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-bound..bound))
        };
        let f = cfg.n_filters();
        let h = cfg.hidden_dim();
        let mut params = DanParams::zeros(cfg);
        params.w_s = uniform(f, cfg.n_in_channels);
        params.w_1 = uniform(h, f);
        params.w_2 = uniform(cfg.n_out_channels, h);
        params.gamma.fill(1.0);
        Ok(DanModel {
            params,
            run_mean: Array1::zeros(f),
            run_var: Array1::ones(f),
            config: cfg.clone(),
            mode: Mode::Train,
        })
    }

    /// All-zero weights with identity normalisation (γ = 1, running
    /// variance 1); maps every input to zero.
    pub fn zeroed(cfg: &DanConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = DanParams::zeros(cfg);
        params.gamma.fill(1.0);
        Ok(DanModel {
            params,
            run_mean: Array1::zeros(cfg.n_filters()),
            run_var: Array1::ones(cfg.n_filters()),
            config: cfg.clone(),
            mode: Mode::Infer,
        })
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Verifies tensor shapes against the configuration.
    pub fn validate(&self) -> Result<()> {
        let expect = DanParams::zeros(&self.config);
        if !self.params.same_shape(&expect)
            || self.run_mean.len() != self.config.n_filters()
            || self.run_var.len() != self.config.n_filters()
        {
            return Err(Error::ShapeMismatch("parameters do not match configuration".into()));
        }
        if self.run_var.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::ShapeMismatch("negative running variance".into()));
        }
        if !self.params.is_finite() || self.run_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn check_input(&self, x: &Array2<f64>, n_trials: usize) -> Result<()> {
        let cfg = &self.config;
        if x.nrows() != cfg.n_in_channels || x.ncols() != n_trials * cfg.n_samples {
            return Err(Error::ShapeMismatch(format!(
                "expected {} trials of {}x{}, got a {}x{} stack",
                n_trials,
                cfg.n_in_channels,
                cfg.n_samples,
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn activate(&self, a: &mut Array2<f64>) {
        if self.config.activation == Activation::Tanh {
            a.mapv_inplace(f64::tanh);
        }
    }

    /// Forward pass on a stacked batch `[C, n_trials·S]`, in the model's
    /// current mode.
    pub fn forward_stacked(&self, x: Array2<f64>, n_trials: usize) -> Result<ForwardCache> {
        self.check_input(&x, n_trials)?;
        let p = &self.params;
        let mut y = p.w_s.dot(&x);
        let cols = y.ncols() as f64;
        let (batch_mean, batch_var, inv_std) = match self.mode {
            Mode::Train => {
                let mean = y.mean_axis(Axis(1)).expect("non-empty batch");
                y -= &mean.view().insert_axis(Axis(1));
                let var = y.map_axis(Axis(1), |r| r.dot(&r) / cols);
                let inv = var.mapv(|v| 1.0 / (v + self.config.bn_eps).sqrt());
                (mean + &p.b_s, var, inv)
            }
            Mode::Infer => {
                y += &(&p.b_s - &self.run_mean).insert_axis(Axis(1));
                let inv = self.run_var.mapv(|v| 1.0 / (v + self.config.bn_eps).sqrt());
                (self.run_mean.clone(), self.run_var.clone(), inv)
            }
        };
        y *= &inv_std.view().insert_axis(Axis(1));
        let x_hat = y;
        let mut y_bn = &x_hat * &p.gamma.view().insert_axis(Axis(1));
        y_bn += &p.beta.view().insert_axis(Axis(1));
        let mut z = p.w_1.dot(&y_bn);
        z += &p.b_1.view().insert_axis(Axis(1));
        self.activate(&mut z);
        let mut out = p.w_2.dot(&z);
        out += &p.b_2.view().insert_axis(Axis(1));
        Ok(ForwardCache {
            mode: self.mode,
            n_trials,
            x,
            x_hat,
            inv_std,
            y_bn,
            z,
            out,
            batch_mean,
            batch_var,
        })
    }

    /// Forward pass over a batch of `[C, S]` trials.
    pub fn forward(&self, batch: &[ArrayView2<'_, f64>]) -> Result<ForwardCache> {
        let x = stack_trials(batch.iter().cloned())?;
        self.forward_stacked(x, batch.len())
    }

    /// Inference on one trial using running statistics.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let m = DanModel {
            mode: Mode::Infer,
            ..self.clone()
        };
        Ok(m.forward_stacked(x.to_owned(), 1)?.out)
    }

    /// Exponential-average update of the running statistics from a
    /// training-mode cache (unbiased variance, as in common frameworks).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.config.bn_momentum;
        let cols = cache.x.ncols() as f64;
        let unbias = if cols > 1.0 { cols / (cols - 1.0) } else { 1.0 };
        Zip::from(&mut self.run_mean)
            .and(&cache.batch_mean)
            .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
        Zip::from(&mut self.run_var)
            .and(&cache.batch_var)
            .for_each(|r, &b| *r = (1.0 - m) * *r + m * b * unbias);
    }
}

/// Mean over the batch of the squared Frobenius norm of each trial's error.
pub fn dan_loss(pred: &Array2<f64>, target: &Array2<f64>, n_trials: usize) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if n_trials == 0 {
        return Err(Error::Empty);
    }
    let sq: f64 = Zip::from(pred)
        .and(target)
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sq / n_trials as f64)
}

/// Gradients of [`dan_loss`] with respect to every parameter, given the
/// cache of the forward pass on `x` and stacked targets `y`.
pub fn dan_backward(
    model: &DanModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    cache: &ForwardCache,
) -> Result<(DanParams, f64)> {
    if cache.x.dim() != x.dim() || cache.x != *x {
        return Err(Error::StaleCache);
    }
    let loss = dan_loss(&cache.out, y, cache.n_trials)?;
    let p = &model.params;
    let n = cache.n_trials as f64;

    let g = (&cache.out - y) * (2.0 / n);
    let d_w2 = g.dot(&cache.z.t());
    let d_b2 = g.sum_axis(Axis(1));
    let mut d_a = p.w_2.t().dot(&g);
    if model.config.activation == Activation::Tanh {
        Zip::from(&mut d_a)
            .and(&cache.z)
            .for_each(|d, &z| *d *= 1.0 - z * z);
    }
    let d_w1 = d_a.dot(&cache.y_bn.t());
    let d_b1 = d_a.sum_axis(Axis(1));
    let d_ybn = p.w_1.t().dot(&d_a);

    let d_gamma = (&d_ybn * &cache.x_hat).sum_axis(Axis(1));
    let d_beta = d_ybn.sum_axis(Axis(1));
    let mut d_xhat = d_ybn;
    d_xhat *= &p.gamma.view().insert_axis(Axis(1));

    let (d_y1, d_bs) = match cache.mode {
        Mode::Train => {
            // dY = inv/M · (M·dx̂ − Σdx̂ − x̂·Σ(dx̂⊙x̂)), row by row
            let m = d_xhat.ncols() as f64;
            let sum_d = d_xhat.sum_axis(Axis(1));
            let sum_dx = (&d_xhat * &cache.x_hat).sum_axis(Axis(1));
            let mut d = d_xhat;
            Zip::from(d.rows_mut())
                .and(cache.x_hat.rows())
                .and(&sum_d)
                .and(&sum_dx)
                .and(&cache.inv_std)
                .for_each(|mut row, xh, &sd, &sdx, &inv| {
                    Zip::from(&mut row).and(&xh).for_each(|v, &xv| {
                        *v = inv * (*v - sd / m - xv * sdx / m);
                    });
                });
            let zeros = Array1::zeros(p.b_s.len());
            (d, zeros)
        }
        Mode::Infer => {
            let mut d = d_xhat;
            d *= &cache.inv_std.view().insert_axis(Axis(1));
            let db = d.sum_axis(Axis(1));
            (d, db)
        }
    };
    let d_ws = d_y1.dot(&x.t());
    Ok((
        DanParams {
            w_s: d_ws,
            b_s: d_bs,
            gamma: d_gamma,
            beta: d_beta,
            w_1: d_w1,
            b_1: d_b1,
            w_2: d_w2,
            b_2: d_b2,
        },
        loss,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(c: usize, o: usize, s: usize) -> DanConfig {
        DanConfig::for_shape(c, o, s)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-2.0..2.0))
    }

    /// Straight-line per-element evaluation of the network, independent of
    /// the matrix formulation.
    fn reference_forward(m: &DanModel, trials: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let p = &m.params;
        let (f, c) = p.w_s.dim();
        let s = trials[0].ncols();
        let mut y1: Vec<Array2<f64>> = Vec::new();
        for x in trials {
            let mut y = Array2::zeros((f, s));
            for i in 0..f {
                for t in 0..s {
                    let mut acc = p.b_s[i];
                    for j in 0..c {
                        acc += p.w_s[[i, j]] * x[[j, t]];
                    }
                    y[[i, t]] = acc;
                }
            }
            y1.push(y);
        }
        let total = (trials.len() * s) as f64;
        let mut mean = vec![0.0; f];
        let mut var = vec![0.0; f];
        for i in 0..f {
            if m.mode == Mode::Train {
                mean[i] = y1.iter().map(|y| y.row(i).sum()).sum::<f64>() / total;
                var[i] = y1
                    .iter()
                    .map(|y| y.row(i).iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / total;
            } else {
                mean[i] = m.run_mean[i];
                var[i] = m.run_var[i];
            }
        }
        y1.iter()
            .map(|y| {
                let h = p.w_1.nrows();
                let o = p.w_2.nrows();
                let mut out = Array2::zeros((o, s));
                for t in 0..s {
                    let bn: Vec<f64> = (0..f)
                        .map(|i| {
                            p.gamma[i] * (y[[i, t]] - mean[i]) / (var[i] + m.config.bn_eps).sqrt()
                                + p.beta[i]
                        })
                        .collect();
                    let z: Vec<f64> = (0..h)
                        .map(|k| {
                            let a = p.b_1[k] + (0..f).map(|i| p.w_1[[k, i]] * bn[i]).sum::<f64>();
                            match m.config.activation {
                                Activation::Tanh => a.tanh(),
                                Activation::Identity => a,
                            }
                        })
                        .collect();
                    for q in 0..o {
                        out[[q, t]] = p.b_2[q] + (0..h).map(|k| p.w_2[[q, k]] * z[k]).sum::<f64>();
                    }
                }
                out
            })
            .collect()
    }

    fn perturbed(seed: u64, c: &DanConfig) -> DanModel {
        let mut m = DanModel::init(c, seed).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed + 1000);
        for s in m.params.slices_mut() {
            for v in s.iter_mut() {
                *v += r.gen_range(-0.3..0.3);
            }
        }
        m.run_mean.mapv_inplace(|_| r.gen_range(-0.5..0.5));
        m.run_var.mapv_inplace(|_| r.gen_range(0.5..2.0));
        m
    }

    #[test]
    fn zero_model_maps_to_zero() {
        let m = DanModel::zeroed(&cfg(3, 2, 7)).unwrap();
        let x = random(3, 7, 1);
        let y = m.transform(x.view()).unwrap();
        assert_eq!(y.dim(), (2, 7));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn near_identity_composition() {
        let c = cfg(4, 4, 9);
        let mut m = DanModel::zeroed(&c).unwrap();
        let eps = 1e-6;
        m.params.w_s = Array2::eye(4);
        m.params.w_1 = Array2::eye(4) * eps;
        m.params.w_2 = Array2::eye(4) / eps;
        let x = random(4, 9, 2);
        let y = m.transform(x.view()).unwrap();
        let bn_scale = 1.0 / (1.0 + c.bn_eps).sqrt();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b * bn_scale).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn matches_reference_in_both_modes() {
        for (seed, act) in [(3, Activation::Tanh), (4, Activation::Identity)] {
            let c = DanConfig {
                activation: act,
                hidden_dim: Some(5),
                n_filters: Some(4),
                ..cfg(3, 2, 6)
            };
            let trials: Vec<Array2<f64>> = (0..3).map(|i| random(3, 6, seed * 10 + i)).collect();
            for mode in [Mode::Train, Mode::Infer] {
                let m = perturbed(seed, &c).with_mode(mode);
                let views: Vec<_> = trials.iter().map(|t| t.view()).collect();
                let cache = m.forward(&views).unwrap();
                let want = reference_forward(&m, &trials);
                for (i, w) in want.iter().enumerate() {
                    for (a, b) in cache.trial_output(i).iter().zip(w.iter()) {
                        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn infer_is_deterministic_bitwise() {
        let m = perturbed(5, &cfg(3, 3, 8)).with_mode(Mode::Infer);
        let x = random(3, 8, 9);
        let a = m.transform(x.view()).unwrap();
        let b = m.transform(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn train_and_infer_agree_with_frozen_batch_stats() {
        let m = perturbed(6, &cfg(3, 2, 10));
        let trials: Vec<Array2<f64>> = (0..4).map(|i| random(3, 10, 60 + i)).collect();
        let views: Vec<_> = trials.iter().map(|t| t.view()).collect();
        let train = m.clone().with_mode(Mode::Train).forward(&views).unwrap();
        let mut frozen = m.with_mode(Mode::Infer);
        frozen.run_mean = train.batch_mean().clone();
        frozen.run_var = train.batch_var().clone();
        let infer = frozen.forward(&views).unwrap();
        for (a, b) in train.output().iter().zip(infer.output().iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_activation_is_affine() {
        let c = DanConfig {
            activation: Activation::Identity,
            ..cfg(3, 3, 5)
        };
        let m = perturbed(7, &c).with_mode(Mode::Infer);
        let x = random(3, 5, 70);
        let y = random(3, 5, 71);
        let zero = m.transform(Array2::zeros((3, 5)).view()).unwrap();
        let (a, b) = (0.7, -1.9);
        let mix = m.transform((&x * a + &y * b).view()).unwrap();
        let fx = m.transform(x.view()).unwrap() - &zero;
        let fy = m.transform(y.view()).unwrap() - &zero;
        let want = &fx * a + &fy * b + &zero;
        for (p, q) in mix.iter().zip(want.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
        // tanh breaks it
        let t = perturbed(7, &cfg(3, 3, 5)).with_mode(Mode::Infer);
        let zero = t.transform(Array2::zeros((3, 5)).view()).unwrap();
        let lhs = t.transform((&x * 3.0).view()).unwrap() - &zero;
        let rhs = (t.transform(x.view()).unwrap() - &zero) * 3.0;
        assert!(lhs.iter().zip(rhs.iter()).any(|(p, q)| (p - q).abs() > 1e-3));
    }

    #[test]
    fn loss_values() {
        let a = random(8, 375, 1);
        assert_eq!(dan_loss(&a, &a, 1).unwrap(), 0.0);
        let b = &a + 1.0;
        assert!((dan_loss(&a, &b, 1).unwrap() - 3000.0).abs() < 1e-9);
        // brute force over a 3-trial batch
        let p = random(2, 12, 2);
        let t = random(2, 12, 3);
        let mut want = 0.0;
        for i in 0..3 {
            let mut fro = 0.0;
            for r in 0..2 {
                for c in 0..4 {
                    fro += (p[[r, i * 4 + c]] - t[[r, i * 4 + c]]).powi(2);
                }
            }
            want += fro;
        }
        want /= 3.0;
        assert!((dan_loss(&p, &t, 3).unwrap() - want).abs() < 1e-12);
        assert!(matches!(
            dan_loss(&p, &random(2, 11, 0), 3),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let m = perturbed(8, &cfg(3, 2, 6));
        let trials: Vec<Array2<f64>> = (0..3).map(|i| random(3, 6, 80 + i)).collect();
        let views: Vec<_> = trials.iter().map(|t| t.view()).collect();
        let cache = m.forward(&views).unwrap();
        let x = stack_trials(views.iter().cloned()).unwrap();
        let y = cache.output().clone();
        let (g, loss) = dan_backward(&m, &x, &y, &cache).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_keeps_gradients() {
        let m = perturbed(9, &cfg(3, 2, 6));
        let trials: Vec<Array2<f64>> = (0..3).map(|i| random(3, 6, 90 + i)).collect();
        let targets: Vec<Array2<f64>> = (0..3).map(|i| random(2, 6, 95 + i)).collect();
        let run = |idx: &[usize]| {
            let xs: Vec<_> = idx.iter().map(|&i| trials[i].view()).collect();
            let ys: Vec<_> = idx.iter().map(|&i| targets[i].view()).collect();
            let cache = m.forward(&xs).unwrap();
            let x = stack_trials(xs).unwrap();
            let y = stack_trials(ys).unwrap();
            dan_backward(&m, &x, &y, &cache).unwrap()
        };
        let (g1, l1) = run(&[0, 1, 2]);
        let (g2, l2) = run(&[0, 1, 2, 0, 1, 2]);
        assert!((l1 - l2).abs() < 1e-12 * l1);
        for (a, b) in g1.slices().iter().zip(g2.slices().iter()) {
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((p - q).abs() <= 1e-10 * p.abs().max(1e-6), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn stale_cache_is_detected() {
        let m = perturbed(10, &cfg(2, 2, 4));
        let a = random(2, 4, 1);
        let b = random(2, 4, 2);
        let cache = m.forward(&[a.view()]).unwrap();
        assert!(matches!(
            dan_backward(&m, &b, &a, &cache),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn shape_and_finiteness_checks() {
        let m = DanModel::init(&cfg(3, 2, 5), 0).unwrap();
        assert!(matches!(
            m.transform(random(2, 5, 0).view()),
            Err(Error::ShapeMismatch(_))
        ));
        let mut x = random(3, 5, 0);
        x[[0, 0]] = f64::INFINITY;
        assert!(matches!(m.transform(x.view()), Err(Error::NonFiniteInput)));
    }

    fn numeric_loss(m: &DanModel, x: &Array2<f64>, y: &Array2<f64>, n: usize) -> f64 {
        let c = m.forward_stacked(x.clone(), n).unwrap();
        dan_loss(c.output(), y, n).unwrap()
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..10u64 {
            let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Identity };
            let c = DanConfig {
                activation: act,
                n_filters: Some(3),
                hidden_dim: Some(5),
                ..cfg(4, 3, 20)
            };
            for mode in [Mode::Train, Mode::Infer] {
                let m = perturbed(seed, &c).with_mode(mode);
                let x = random(4, 60, 200 + seed);
                let y = random(3, 60, 300 + seed) * 0.5;
                let cache = m.forward_stacked(x.clone(), 3).unwrap();
                let (g, _) = dan_backward(&m, &x, &y, &cache).unwrap();
                let h = 1e-5;
                for t in 0..8 {
                    let n_el = g.slices()[t].len();
                    for e in 0..n_el {
                        let mut plus = m.clone();
                        plus.params.slices_mut()[t][e] += h;
                        let mut minus = m.clone();
                        minus.params.slices_mut()[t][e] -= h;
                        let fd = (numeric_loss(&plus, &x, &y, 3) - numeric_loss(&minus, &x, &y, 3))
                            / (2.0 * h);
                        let an = g.slices()[t][e];
                        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                        assert!(
                            rel < 1e-4,
                            "seed {seed} {mode:?} {}[{e}]: analytic {an} numeric {fd}",
                            DanParams::NAMES[t]
                        );
                    }
                }
                if mode == Mode::Train {
                    assert!(g.b_s.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn running_stats_update() {
        let c = cfg(2, 2, 5);
        let mut m = DanModel::init(&c, 1).unwrap();
        let x = random(2, 10, 5);
        let cache = m.forward_stacked(x, 2).unwrap();
        let bm = cache.batch_mean().clone();
        let bv = cache.batch_var().clone();
        m.update_running_stats(&cache);
        for i in 0..2 {
            assert!((m.run_mean[i] - 0.1 * bm[i]).abs() < 1e-15);
            assert!((m.run_var[i] - (0.9 + 0.1 * bv[i] * 10.0 / 9.0)).abs() < 1e-14);
        }
    }
}

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::{EpochSet, MIN_CALIB_TRIALS};
use crate::dsp::{FilterBank, FilterSpec};
use crate::error::{Error, Result};

/// Sub-bands used when none are configured.
pub const DEFAULT_BANDS: usize = 5;

/// Relative jitter added to `Q` before whitening.
const JITTER: f64 = 1e-10;

/// Weight of sub-band `m` (1-based).
pub fn band_weight(m: usize) -> f64 {
    (m as f64).powf(-1.25) + 0.25
}

/// Inter-trial covariance `S = Σ_{i≠j} X_i X_jᵀ` and total covariance
/// `Q = Σ_i X_i X_iᵀ` of per-channel centred trials.
pub fn trca_matrices(trials: &[Array2<f64>]) -> (Array2<f64>, Array2<f64>) {
    let c = trials.first().map_or(0, |t| t.nrows());
    let mut sum = Array2::<f64>::zeros(trials.first().map_or((0, 0), |t| t.dim()));
    let mut q = Array2::<f64>::zeros((c, c));
    for t in trials {
        let mean = t.mean_axis(Axis(1)).expect("non-empty trial");
        let x = t - &mean.insert_axis(Axis(1));
        q += &x.dot(&x.t());
        sum += &x;
    }
    let s = sum.dot(&sum.t()) - &q;
    (s, q)
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Leading solution of `S w = λ Q w`, normalised to unit length with its
/// first nonzero entry positive. `Q` is jittered by `1e-10·tr(Q)/C` and
/// whitened symmetrically.
pub fn leading_filter(s: &Array2<f64>, q: &Array2<f64>) -> Option<(Array1<f64>, f64)> {
    let c = q.nrows();
    let tr = q.diag().sum();
    if !(tr > 0.0 && tr.is_finite()) {
        return None;
    }
    let mut qm = to_dmatrix(q);
    for i in 0..c {
        qm[(i, i)] += JITTER * tr / c as f64;
    }
    let eq = SymmetricEigen::new(qm);
    let floor = f64::EPSILON * tr;
    let inv_sqrt = eq.eigenvalues.map(|d| 1.0 / d.max(floor).sqrt());
    let q_isqrt = &eq.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eq.eigenvectors.transpose();
    let mut m = &q_isqrt * to_dmatrix(s) * &q_isqrt;
    m = (&m + m.transpose()) * 0.5;
    let em = SymmetricEigen::new(m);
    let (top, &lambda) = em
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let w = &q_isqrt * em.eigenvectors.column(top);
    let norm = w.norm();
    if !(norm > 0.0 && norm.is_finite() && lambda.is_finite()) {
        return None;
    }
    let mut w = Array1::from_iter(w.iter().map(|v| v / norm));
    let tol = 1e-12;
    if let Some(first) = w.iter().find(|v| v.abs() > tol) {
        if *first < 0.0 {
            w.mapv_inplace(|v| -v);
        }
    }
    Some((w, lambda))
}

/// Fitted ensemble TRCA decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TrcaModel {
    pub specs: Vec<FilterSpec>,
    /// `W_m = [w_{1,m} … w_{K,m}]`, `[C, K]` per band.
    pub filters: Vec<Array2<f64>>,
    /// Leading eigenvalue per band and stimulus.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Band-filtered mean of the calibration trials, `[band][stimulus]`.
    pub templates: Vec<Vec<Array2<f64>>>,
    pub weights: Vec<f64>,
    /// `W_mᵀ T_{k,m}` cached for classification.
    projected: Vec<Vec<Array2<f64>>>,
}

impl TrcaModel {
    pub fn n_bands(&self) -> usize {
        self.filters.len()
    }

    pub fn n_stimuli(&self) -> usize {
        self.filters.first().map_or(0, |w| w.ncols())
    }

    pub fn n_channels(&self) -> usize {
        self.filters.first().map_or(0, |w| w.nrows())
    }

    /// Filter of stimulus `k` in band `m` (0-based).
    pub fn filter(&self, m: usize, k: usize) -> Array1<f64> {
        self.filters[m].column(k).to_owned()
    }

    /// Predicted label of every trial in `set`.
    pub fn predict(&self, bank: &FilterBank, set: &EpochSet) -> Result<Vec<usize>> {
        (0..set.n_trials())
            .map(|i| trca_classify(set.trial(i), self, bank).map(|(k, _)| k))
            .collect()
    }

    /// Human-readable table of leading eigenvalues and filter norms.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "TRCA: {} bands, {} stimuli, {} channels",
            self.n_bands(),
            self.n_stimuli(),
            self.n_channels()
        );
        let _ = writeln!(s, "band\tweight\tstimulus\teigenvalue\tfilter_norm");
        for m in 0..self.n_bands() {
            for k in 0..self.n_stimuli() {
                let norm = self.filters[m].column(k).dot(&self.filters[m].column(k)).sqrt();
                let _ = writeln!(
                    s,
                    "{}\t{:.4}\t{}\t{:.6e}\t{:.6}",
                    m + 1,
                    self.weights[m],
                    k,
                    self.eigenvalues[m][k],
                    norm
                );
            }
        }
        s
    }
}

/// Fits per-band, per-stimulus filters and templates from calibration data.
pub fn trca_fit(calib: &EpochSet, bank: &FilterBank) -> Result<TrcaModel> {
    if bank.n_bands() == 0 {
        return Err(Error::InvalidBandCount);
    }
    if bank.n_samples() != calib.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "filter bank planned for {} samples, trials have {}",
            bank.n_samples(),
            calib.n_samples()
        )));
    }
    if let Some(spec) = bank.specs().iter().find(|s| s.fs != calib.fs) {
        return Err(Error::SampleRateMismatch {
            filter_fs: spec.fs,
            data_fs: calib.fs,
        });
    }
    let counts = calib.counts();
    if let Some((k, &n)) = counts.iter().enumerate().find(|(_, &n)| n < MIN_CALIB_TRIALS) {
        return Err(Error::TooFewTrials {
            stimulus: k,
            available: n,
        });
    }
    let n_bands = bank.n_bands();
    let n_stim = calib.n_stimuli();
    let c = calib.n_channels();
    // [trial][band]
    let banded: Vec<Vec<Array2<f64>>> = (0..calib.n_trials()).map(|i| bank.apply(calib.trial(i))).collect();

    let mut filters = vec![Array2::zeros((c, n_stim)); n_bands];
    let mut eigenvalues = vec![vec![0.0; n_stim]; n_bands];
    let mut templates = vec![Vec::with_capacity(n_stim); n_bands];
    for k in 0..n_stim {
        let idx = calib.indices_of(k);
        for m in 0..n_bands {
            let trials: Vec<Array2<f64>> = idx.iter().map(|&i| banded[i][m].clone()).collect();
            let (s, q) = trca_matrices(&trials);
            let (w, lambda) =
                leading_filter(&s, &q).ok_or(Error::SingularCovariance { stimulus: k, band: m + 1 })?;
            filters[m].column_mut(k).assign(&w);
            eigenvalues[m][k] = lambda;
            let mut tpl = Array2::zeros(trials[0].raw_dim());
            for t in &trials {
                tpl += t;
            }
            tpl /= trials.len() as f64;
            templates[m].push(tpl);
        }
    }
    let projected = (0..n_bands)
        .map(|m| templates[m].iter().map(|t| filters[m].t().dot(t)).collect())
        .collect();
    Ok(TrcaModel {
        specs: bank.specs().to_vec(),
        filters,
        eigenvalues,
        templates,
        weights: (1..=n_bands).map(band_weight).collect(),
        projected,
    })
}

fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let den = (saa * sbb).sqrt();
    if den > 0.0 {
        sab / den
    } else {
        0.0
    }
}

/// Classifies one trial; returns the winning stimulus (lowest index on
/// ties) and every stimulus' ensemble score.
pub fn trca_classify(trial: ArrayView2<'_, f64>, model: &TrcaModel, bank: &FilterBank) -> Result<(usize, Vec<f64>)> {
    if trial.nrows() != model.n_channels() || trial.ncols() != bank.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "trial is {}x{}, model expects {}x{}",
            trial.nrows(),
            trial.ncols(),
            model.n_channels(),
            bank.n_samples()
        )));
    }
    if bank.n_bands() != model.n_bands() {
        return Err(Error::ShapeMismatch(format!(
            "bank has {} bands, model {}",
            bank.n_bands(),
            model.n_bands()
        )));
    }
    let bands = bank.apply(trial);
    let mut scores = vec![0.0; model.n_stimuli()];
    for (m, xm) in bands.iter().enumerate() {
        let proj = model.filters[m].t().dot(xm);
        for (k, score) in scores.iter_mut().enumerate() {
            *score += model.weights[m] * pearson(&proj, &model.projected[m][k]);
        }
    }
    let mut best = 0;
    for (k, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = k;
        }
    }
    Ok((best, scores))
}

/// Fraction of matching labels.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_weights() {
        assert!((band_weight(1) - 1.25).abs() < 1e-15);
        assert!((band_weight(2) - 0.6705).abs() < 1e-4);
        assert!((band_weight(2) - 0.670_448_207_626_857_2).abs() < 1e-12);
        // direct evaluation gives 0.503279 (not 0.5031)
        assert!((band_weight(3) - 0.503_278_561_883_864_2).abs() < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty)));
    }

    #[test]
    fn pearson_basics() {
        let a = Array2::from_shape_vec((1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((pearson(&a, &(&a * 3.0 + 1.0)) - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &(&a * -2.0)) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &Array2::zeros((1, 4))), 0.0);
    }

    #[test]
    fn matrices_match_pairwise_definition() {
        let trials: Vec<Array2<f64>> = (0..3)
            .map(|i| Array2::from_shape_fn((2, 5), |(c, t)| ((i * 7 + c * 3 + t) as f64).sin()))
            .collect();
        let (s, q) = trca_matrices(&trials);
        let centred: Vec<Array2<f64>> = trials
            .iter()
            .map(|t| t - &t.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1)))
            .collect();
        let mut s_ref = Array2::zeros((2, 2));
        let mut q_ref = Array2::zeros((2, 2));
        for i in 0..3 {
            q_ref += &centred[i].dot(&centred[i].t());
            for j in 0..3 {
                if i != j {
                    s_ref += &centred[i].dot(&centred[j].t());
                }
            }
        }
        for (a, b) in s.iter().zip(s_ref.iter()).chain(q.iter().zip(q_ref.iter())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_covariance_is_singular() {
        let z = Array2::zeros((3, 3));
        assert!(leading_filter(&z, &z).is_none());
    }
}

//! Least-squares transformation baseline: one affine channel map per
//! stimulus, fitted in closed form.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use super::pairs::{check_stimuli, target_templates};
use crate::data::EpochSet;
use crate::error::{Error, Result};

/// Relative Tikhonov ridge on the normal equations.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LstTransform {
    /// `P_k` of shape `[C', C + 1]` per stimulus; the last column is the
    /// bias. `None` for stimuli absent from the fitting data.
    pub maps: Vec<Option<Array2<f64>>>,
    /// Stimuli whose Gram matrix had an eigenvalue below the ridge, so the
    /// fit there is regularisation-dominated.
    pub rank_deficient: Vec<usize>,
}

impl LstTransform {
    pub fn map(&self, k: usize) -> Result<&Array2<f64>> {
        self.maps
            .get(k)
            .and_then(|m| m.as_ref())
            .ok_or(Error::MissingStimulusTransform(k))
    }

    /// `P·[x; 1]` for one trial.
    pub fn apply(&self, k: usize, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let p = self.map(k)?;
        let c = x.nrows();
        if p.ncols() != c + 1 {
            return Err(Error::ShapeMismatch(format!(
                "map expects {} channels, trial has {c}",
                p.ncols() - 1
            )));
        }
        let mut y = p.slice(s![.., ..c]).dot(&x);
        y += &p.slice(s![.., c..]);
        Ok(y)
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Fits `P_k = argmin ‖Ȳ_k − P·X̃‖_F` for each stimulus in `source`, where
/// `X̃` stacks the source trials of stimulus `k` side by side with a row of
/// ones and `Ȳ_k` tiles the target template.
pub fn lst_fit(source: &EpochSet, target_calib: &EpochSet) -> Result<LstTransform> {
    check_stimuli(source, target_calib)?;
    if source.n_samples() != target_calib.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "source trials have {} samples, target {}",
            source.n_samples(),
            target_calib.n_samples()
        )));
    }
    let templates = target_templates(target_calib, source.labels.iter().copied())?;
    let c = source.n_channels();
    let mut maps = vec![None; source.n_stimuli()];
    let mut rank_deficient = Vec::new();
    for (k, t) in templates.iter().enumerate() {
        let Some(t) = t else { continue };
        let mut gram = Array2::<f64>::zeros((c + 1, c + 1));
        let mut sum = Array2::<f64>::zeros((c + 1, source.n_samples()));
        for i in source.indices_of(k) {
            let x = source.trial(i);
            let mut xa = Array2::ones((c + 1, x.ncols()));
            xa.slice_mut(s![..c, ..]).assign(&x);
            gram += &xa.dot(&xa.t());
            sum += &xa;
        }
        let b = t.dot(&sum.t());
        let lambda = RIDGE * gram.diag().sum() / (c + 1) as f64;
        let g = to_dmatrix(&gram);
        let min_eig = SymmetricEigen::new(g.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min_eig >= lambda) {
            log::warn!("LST stimulus {k}: Gram matrix is rank deficient (min eigenvalue {min_eig:.3e})");
            rank_deficient.push(k);
        }
        let reg = g + DMatrix::identity(c + 1, c + 1) * lambda.max(f64::MIN_POSITIVE);
        let chol = reg.cholesky().ok_or(Error::RankDeficient(k))?;
        // P·G = B  ⇔  G·Pᵀ = Bᵀ
        let pt = chol.solve(&to_dmatrix(&b).transpose());
        let p = Array2::from_shape_fn((b.nrows(), c + 1), |(i, j)| pt[(j, i)]);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient(k));
        }
        maps[k] = Some(p);
    }
    Ok(LstTransform {
        maps,
        rank_deficient,
    })
}

/// Applies the map of each trial's stimulus.
pub fn lst_transform(t: &LstTransform, source: &EpochSet) -> Result<EpochSet> {
    let mut out: Option<Array3<f64>> = None;
    for (i, &k) in source.labels.iter().enumerate() {
        let y = t.apply(k, source.trial(i))?;
        let o = out.get_or_insert_with(|| Array3::zeros((source.n_trials(), y.nrows(), y.ncols())));
        o.index_axis_mut(Axis(0), i).assign(&y);
    }
    let n_out = t.maps.iter().flatten().next().map_or(source.n_channels(), |p| p.nrows());
    let trials = out.unwrap_or_else(|| Array3::zeros((0, n_out, source.n_samples())));
    let mut set = source.with_trials(trials);
    if set.channel_names.len() != n_out {
        set.channel_names = (0..n_out).map(|i| format!("Ch{i}")).collect();
    }
    Ok(set)
}

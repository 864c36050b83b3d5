use std::sync::Arc;

use ndarray::Array2;

use crate::data::{EpochSet, MIN_CALIB_TRIALS};
use crate::error::{Error, Result};

/// One supervised example: a source trial and the target subject's
/// template for the same stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub x: Array2<f64>,
    /// Shared between all pairs of one stimulus.
    pub y: Arc<Array2<f64>>,
    pub stimulus: usize,
    /// Position of the source subject in the list handed to training.
    pub source: usize,
    /// Trial index within the source set.
    pub trial: usize,
}

/// Checks that two sets describe the same stimuli.
pub(crate) fn check_stimuli(a: &EpochSet, b: &EpochSet) -> Result<()> {
    if a.n_stimuli() != b.n_stimuli() {
        return Err(Error::StimulusMismatch(format!(
            "`{}` has {} stimuli, `{}` has {}",
            a.subject_id,
            a.n_stimuli(),
            b.subject_id,
            b.n_stimuli()
        )));
    }
    for (k, (fa, fb)) in a.stim_freqs.iter().zip(&b.stim_freqs).enumerate() {
        if (fa - fb).abs() > 1e-9 * fa.abs().max(1.0) {
            return Err(Error::StimulusMismatch(format!(
                "stimulus {k}: {fa} Hz vs {fb} Hz"
            )));
        }
    }
    Ok(())
}

/// Per-stimulus templates of the target calibration set, requiring at least
/// [`MIN_CALIB_TRIALS`] trials for every stimulus in `needed`.
pub(crate) fn target_templates(
    target_calib: &EpochSet,
    needed: impl IntoIterator<Item = usize>,
) -> Result<Vec<Option<Arc<Array2<f64>>>>> {
    let counts = target_calib.counts();
    let mut out: Vec<Option<Arc<Array2<f64>>>> = vec![None; target_calib.n_stimuli()];
    for k in needed {
        if out[k].is_some() {
            continue;
        }
        if counts[k] < MIN_CALIB_TRIALS {
            return Err(Error::TargetTooFew {
                stimulus: k,
                available: counts[k],
            });
        }
        out[k] = target_calib.template(k).map(Arc::new);
    }
    Ok(out)
}

/// Pairs every source trial with the target template of its stimulus.
/// Pairs of all stimuli are pooled; pairing never crosses stimuli.
pub fn make_training_pairs(source: &EpochSet, target_calib: &EpochSet) -> Result<Vec<TrainPair>> {
    make_pairs_tagged(source, target_calib, 0)
}

pub(crate) fn make_pairs_tagged(
    source: &EpochSet,
    target_calib: &EpochSet,
    source_pos: usize,
) -> Result<Vec<TrainPair>> {
    check_stimuli(source, target_calib)?;
    if source.n_samples() != target_calib.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "source trials have {} samples, target {}",
            source.n_samples(),
            target_calib.n_samples()
        )));
    }
    let templates = target_templates(target_calib, source.labels.iter().copied())?;
    Ok(source
        .labels
        .iter()
        .enumerate()
        .map(|(i, &k)| TrainPair {
            x: source.trial(i).to_owned(),
            y: Arc::clone(templates[k].as_ref().expect("template checked above")),
            stimulus: k,
            source: source_pos,
            trial: i,
        })
        .collect())
}

use ndarray::{s, Axis};
use rand::seq::SliceRandom;

use super::{EpochSet, MIN_CALIB_TRIALS};
use crate::error::{Error, Result};
use crate::rng;

/// Seconds to a sample count, rounding half away from zero.
pub fn time_to_samples(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round().max(0.0) as usize
}

/// Cuts `[onset + latency, onset + latency + window)` out of every trial.
pub fn extract_window(
    epochs: &EpochSet,
    latency_s: f64,
    window_s: f64,
    onset_offset_s: f64,
) -> Result<EpochSet> {
    let start = time_to_samples(onset_offset_s + latency_s, epochs.fs);
    let len = time_to_samples(window_s, epochs.fs);
    if latency_s < 0.0 || onset_offset_s < 0.0 || len == 0 || start + len > epochs.n_samples() {
        return Err(Error::WindowOutOfRange {
            start,
            len,
            n_samples: epochs.n_samples(),
        });
    }
    Ok(epochs.with_trials(epochs.trials.slice(s![.., .., start..start + len]).to_owned()))
}

/// Reorders / subsets the channel axis to `names`.
pub fn select_channels(epochs: &EpochSet, names: &[String]) -> Result<EpochSet> {
    let idx = names
        .iter()
        .map(|n| {
            epochs
                .channel_names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::UnknownChannel(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = epochs.with_trials(epochs.trials.select(Axis(1), &idx));
    out.channel_names = names.to_vec();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    /// The first `n_calib` trials of each stimulus in file (block) order.
    FirstN,
    /// A seeded random choice of `n_calib` trials per stimulus.
    SeededShuffle,
}

/// Calibration and test trial indices, each sorted ascending.
pub fn split_indices(
    epochs: &EpochSet,
    n_calib: usize,
    order: SplitOrder,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_calib < MIN_CALIB_TRIALS {
        return Err(Error::CalibTooSmall(n_calib));
    }
    let mut calib = Vec::new();
    let mut test = Vec::new();
    for k in 0..epochs.n_stimuli() {
        let mut idx = epochs.indices_of(k);
        if idx.len() <= n_calib {
            return Err(Error::InsufficientTrials {
                stimulus: k,
                available: idx.len(),
                requested: n_calib,
            });
        }
        if order == SplitOrder::SeededShuffle {
            idx.shuffle(&mut rng::stream(seed, &[rng::tag("split"), k as u64]));
        }
        calib.extend_from_slice(&idx[..n_calib]);
        test.extend_from_slice(&idx[n_calib..]);
    }
    calib.sort_unstable();
    test.sort_unstable();
    Ok((calib, test))
}

/// Splits each stimulus' trials into `n_calib` calibration trials and the
/// remaining test trials.
pub fn split_calibration_test(
    epochs: &EpochSet,
    n_calib: usize,
    order: SplitOrder,
    seed: u64,
) -> Result<(EpochSet, EpochSet)> {
    let (c, t) = split_indices(epochs, n_calib, order, seed)?;
    Ok((epochs.subset(&c), epochs.subset(&t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn block_set(n_stim: usize, per_stim: usize, c: usize, n: usize) -> EpochSet {
        let total = n_stim * per_stim;
        EpochSet::new(
            Array3::from_shape_fn((total, c, n), |(t, ch, s)| (t * 10_000 + ch * 1000 + s) as f64),
            (0..total).map(|t| t % n_stim).collect(),
            (0..n_stim).map(|k| 8.0 + k as f64).collect(),
            vec![0.0; n_stim],
            250.0,
            "S",
            (0..c).map(|i| format!("C{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn window_indices_dataset_one() {
        let e = block_set(2, 2, 2, 600);
        let w = extract_window(&e, 0.14, 1.5, 0.0).unwrap();
        assert_eq!(w.n_samples(), 375);
        assert_eq!(w.trials[[0, 0, 0]], e.trials[[0, 0, 35]]);
        assert_eq!(w.trials[[3, 1, 374]], e.trials[[3, 1, 35 + 374]]);
        assert_eq!(w.labels, e.labels);
    }

    #[test]
    fn window_indices_dataset_two() {
        let e = block_set(2, 2, 2, 700);
        let w = extract_window(&e, 0.14, 1.5, 0.5).unwrap();
        assert_eq!(w.n_samples(), 375);
        assert_eq!(w.trials[[1, 0, 0]], e.trials[[1, 0, 160]]);
    }

    #[test]
    fn full_window_is_identity() {
        let e = block_set(2, 2, 3, 250);
        let w = extract_window(&e, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(w, e);
    }

    #[test]
    fn window_out_of_range() {
        let e = block_set(2, 2, 2, 300);
        assert!(matches!(
            extract_window(&e, 0.14, 1.5, 0.0),
            Err(Error::WindowOutOfRange { start: 35, len: 375, .. })
        ));
    }

    #[test]
    fn channel_selection() {
        let e = block_set(1, 2, 4, 5);
        let same = select_channels(&e, &e.channel_names).unwrap();
        assert_eq!(same, e);
        let rev: Vec<String> = e.channel_names.iter().rev().cloned().collect();
        let r = select_channels(&e, &rev).unwrap();
        for c in 0..4 {
            assert_eq!(r.trials.slice(s![.., c, ..]), e.trials.slice(s![.., 3 - c, ..]));
        }
        assert!(matches!(
            select_channels(&e, &["Cz".to_string()]),
            Err(Error::UnknownChannel(_))
        ));
    }

    #[test]
    fn split_first_n() {
        let e = block_set(40, 6, 1, 2);
        let (c, t) = split_calibration_test(&e, 4, SplitOrder::FirstN, 0).unwrap();
        assert!(c.counts().iter().all(|&n| n == 4));
        assert!(t.counts().iter().all(|&n| n == 2));
        // first_n takes the first blocks
        let (ci, _) = split_indices(&e, 4, SplitOrder::FirstN, 0).unwrap();
        assert_eq!(ci, (0..160).collect::<Vec<_>>());
    }

    #[test]
    fn split_leaves_two_for_test() {
        let e = block_set(3, 4, 1, 2);
        let (_, t) = split_calibration_test(&e, 2, SplitOrder::FirstN, 0).unwrap();
        assert!(t.counts().iter().all(|&n| n == 2));
    }

    #[test]
    fn split_errors() {
        let e = block_set(3, 4, 1, 2);
        assert!(matches!(
            split_calibration_test(&e, 1, SplitOrder::FirstN, 0),
            Err(Error::CalibTooSmall(1))
        ));
        assert!(matches!(
            split_calibration_test(&e, 4, SplitOrder::FirstN, 0),
            Err(Error::InsufficientTrials { available: 4, .. })
        ));
    }

    #[test]
    fn shuffled_split_is_seeded_partition() {
        let e = block_set(5, 8, 1, 2);
        let a = split_indices(&e, 3, SplitOrder::SeededShuffle, 11).unwrap();
        let b = split_indices(&e, 3, SplitOrder::SeededShuffle, 11).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(a.1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        let c = split_indices(&e, 3, SplitOrder::SeededShuffle, 12).unwrap();
        assert_ne!(a, c);
    }
}

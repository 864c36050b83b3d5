use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssvep_align_core::data::{split_calibration_test, synth_generate, SplitOrder, SynthConfig, NOISELESS_SNR_DB};
use ssvep_align_core::decode::{
    accuracy, leading_filter, trca_classify, trca_fit, trca_matrices, DEFAULT_BANDS,
};
use ssvep_align_core::dsp::{design_filterbank, FilterBank, BANK_BASE_LOW, BANK_HIGH_EDGE};
use ssvep_align_core::{EpochSet, Error};

fn bank(fs: f64, n: usize, bands: usize) -> FilterBank {
    FilterBank::new(&design_filterbank(fs, bands, BANK_BASE_LOW, BANK_HIGH_EDGE).unwrap(), n).unwrap()
}

fn subject(n_stim: usize, per_stim: usize, snr_db: f64, seed: u64) -> EpochSet {
    let cfg = SynthConfig {
        n_subjects: 1,
        freqs: (0..n_stim).map(|k| 8.0 + k as f64).collect(),
        phases: (0..n_stim).map(|k| (k % 4) as f64 * std::f64::consts::FRAC_PI_2).collect(),
        n_trials_per_stim: per_stim,
        snr_db,
        mixing_seed: seed,
        noise_seed: seed + 1000,
        ..SynthConfig::default()
    };
    synth_generate(&cfg).unwrap().subjects.remove(0)
}

fn rayleigh(w: &Array1<f64>, s: &Array2<f64>, q: &Array2<f64>) -> f64 {
    w.dot(&s.dot(w)) / w.dot(&q.dot(w))
}

#[test]
fn high_snr_accuracy() {
    for seed in 0..10 {
        let set = subject(8, 6, 10.0, seed);
        let (calib, test) = split_calibration_test(&set, 2, SplitOrder::FirstN, 0).unwrap();
        let b = bank(set.fs, set.n_samples(), DEFAULT_BANDS);
        let model = trca_fit(&calib, &b).unwrap();
        let pred = model.predict(&b, &test).unwrap();
        let acc = accuracy(&pred, &test.labels).unwrap();
        assert!(acc >= 0.95, "seed {seed}: {acc}");
    }
}

#[test]
fn filters_are_rayleigh_optimal_and_solve_the_eigenproblem() {
    let set = subject(4, 5, -5.0, 3);
    let b = bank(set.fs, set.n_samples(), 3);
    let model = trca_fit(&set, &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..set.n_stimuli() {
        let idx = set.indices_of(k);
        let banded: Vec<Vec<Array2<f64>>> = idx.iter().map(|&i| b.apply(set.trial(i))).collect();
        for m in 0..3 {
            let trials: Vec<Array2<f64>> = banded.iter().map(|t| t[m].clone()).collect();
            let (s, q) = trca_matrices(&trials);
            let w = model.filter(m, k);
            assert!((w.dot(&w) - 1.0).abs() < 1e-12);
            assert!(w.iter().find(|v| v.abs() > 1e-12).unwrap() > &0.0);
            let best = rayleigh(&w, &s, &q);
            for _ in 0..10_000 {
                let v: Array1<f64> = Array1::from_shape_simple_fn(w.len(), || rng.gen_range(-1.0..1.0));
                let v = &v / v.dot(&v).sqrt();
                assert!(rayleigh(&v, &s, &q) <= best + 1e-9 * best.abs());
            }
            let lambda = model.eigenvalues[m][k];
            let resid = &s.dot(&w) - &(q.dot(&w) * lambda);
            let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = resid.dot(&resid).sqrt() / s_norm;
            assert!(rel < 1e-8, "k {k} m {m}: {rel}");
        }
    }
}

#[test]
fn duplicated_trial_refit_stays_valid() {
    let set = subject(2, 4, 0.0, 4);
    let b = bank(set.fs, set.n_samples(), 2);
    let idx = set.indices_of(0);
    let banded: Vec<Array2<f64>> = idx.iter().map(|&i| b.apply(set.trial(i))[0].clone()).collect();
    let (s, q) = trca_matrices(&banded);
    let (w, lambda) = leading_filter(&s, &q).unwrap();
    let mut dup = banded.clone();
    dup.push(banded[0].clone());
    let (s2, q2) = trca_matrices(&dup);
    let (w2, lambda2) = leading_filter(&s2, &q2).unwrap();
    assert!((rayleigh(&w, &s, &q) - lambda).abs() <= 1e-10 * lambda.abs().max(1.0));
    assert!((rayleigh(&w2, &s2, &q2) - lambda2).abs() <= 1e-10 * lambda2.abs().max(1.0));
}

#[test]
fn identical_noiseless_trials() {
    let set = subject(4, 3, NOISELESS_SNR_DB, 5);
    let (calib, test) = split_calibration_test(&set, 2, SplitOrder::FirstN, 0).unwrap();
    let b = bank(set.fs, set.n_samples(), DEFAULT_BANDS);
    let model = trca_fit(&calib, &b).unwrap();
    let pred = model.predict(&b, &test).unwrap();
    assert_eq!(accuracy(&pred, &test.labels).unwrap(), 1.0);
    for m in 0..DEFAULT_BANDS {
        for &l in &model.eigenvalues[m] {
            assert!((l - 1.0).abs() < 1e-6, "{l}");
        }
    }
}

#[test]
fn template_self_match() {
    let set = subject(6, 3, 0.0, 6);
    let b = bank(set.fs, set.n_samples(), DEFAULT_BANDS);
    let model = trca_fit(&set, &b).unwrap();
    for k in 0..6 {
        let raw = set.template(k).unwrap();
        let (pred, scores) = trca_classify(raw.view(), &model, &b).unwrap();
        assert_eq!(pred, k);
        let total: f64 = model.weights.iter().sum();
        assert!((scores[k] - total).abs() < 1e-9);
    }
}

#[test]
fn scale_invariance() {
    let set = subject(4, 4, 0.0, 7);
    let (calib, test) = split_calibration_test(&set, 2, SplitOrder::FirstN, 0).unwrap();
    let b = bank(set.fs, set.n_samples(), 3);
    let model = trca_fit(&calib, &b).unwrap();
    for i in 0..test.n_trials() {
        let x = test.trial(i);
        let (p1, s1) = trca_classify(x, &model, &b).unwrap();
        let (p2, s2) = trca_classify((&x * 37.5).view(), &model, &b).unwrap();
        assert_eq!(p1, p2);
        for (a, c) in s1.iter().zip(&s2) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_rescaling_in_noiseless_case() {
    let set = subject(4, 3, NOISELESS_SNR_DB, 8);
    let gains = [1.0, 2.0, 0.5, 3.0, 1.5, 0.7, 4.0, 1.2];
    let mut scaled = set.clone();
    for (c, g) in gains.iter().enumerate() {
        scaled.trials.slice_mut(ndarray::s![.., c, ..]).mapv_inplace(|v| v * g);
    }
    let b = bank(set.fs, set.n_samples(), 3);
    let run = |s: &EpochSet| {
        let (calib, test) = split_calibration_test(s, 2, SplitOrder::FirstN, 0).unwrap();
        trca_fit(&calib, &b).unwrap().predict(&b, &test).unwrap()
    };
    assert_eq!(run(&set), run(&scaled));
}

#[test]
fn errors() {
    let set = subject(2, 3, 0.0, 9);
    let b = bank(set.fs, set.n_samples(), 2);
    let one = set.subset(&[0, 1]);
    assert!(matches!(
        trca_fit(&one, &b),
        Err(Error::TooFewTrials { stimulus: 0, available: 1 })
    ));
    let model = trca_fit(&set, &b).unwrap();
    let bad = Array2::<f64>::zeros((3, set.n_samples()));
    assert!(matches!(
        trca_classify(bad.view(), &model, &b),
        Err(Error::ShapeMismatch(_))
    ));
    assert!(model.summary().contains("eigenvalue"));
}

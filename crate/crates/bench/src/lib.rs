//! Shared fixtures for the benchmarks.

use ssvep_align_core::data::{synth_generate, EpochSet, SynthConfig};

/// Benchmark-sized synthetic subjects: 8 channels, 250 Hz, 1.5 s windows.
pub fn subjects(n_subjects: usize, n_stimuli: usize, trials_per_stim: usize) -> Vec<EpochSet> {
    let cfg = SynthConfig {
        n_subjects,
        freqs: (0..n_stimuli).map(|k| 8.0 + 0.2 * k as f64).collect(),
        phases: (0..n_stimuli).map(|k| (k % 4) as f64 * std::f64::consts::FRAC_PI_2).collect(),
        n_trials_per_stim: trials_per_stim,
        snr_db: 0.0,
        ..SynthConfig::default()
    };
    synth_generate(&cfg).expect("valid synthetic config").subjects
}

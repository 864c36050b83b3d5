//! Cross-subject alignment of SSVEP recordings.
//!
//! The crate is organised as the processing pipeline:
//!
//! * [`data`]: epoch containers, the EPOC file format, windowing, channel
//!   selection, calibration splits and a synthetic SSVEP generator.
//! * [`dsp`]: notch, decimation, FIR filter bank and Welch spectra.
//! * [`align`]: the data alignment network (forward pass, manual
//!   backpropagation, Adam, two-phase training) and the least-squares
//!   transformation baseline.
//! * [`decode`]: filter-bank ensemble TRCA.
//! * [`eval`]: leave-one-subject-out evaluation of calibration schemes,
//!   sweeps and Wilcoxon signed-rank testing.

pub mod align;
pub mod data;
pub mod decode;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod rng;

pub use data::{EpochSet, MIN_CALIB_TRIALS};
pub use error::{Error, ErrorCategory, Result};

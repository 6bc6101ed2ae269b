//! Cyclostationary spectrum sensing for cognitive radio.
//!
//! The crate models a complex BPSK primary user in AWGN, estimates cyclic
//! autocorrelation functions, adapts a blind LMS FRESH (frequency-shift)
//! filter to the received signal, and runs Monte-Carlo detector
//! comparisons against energy-detection baselines.
//!
//! Module map:
//!
//! - [`sigmodel`]: radio parameters, BPSK and AWGN generation.
//! - [`caf`]: cyclic / conjugate-cyclic autocorrelation estimators.
//! - [`energy`]: radiometer statistic, closed-form Pf/Pd, noise uncertainty.
//! - [`fresh`]: LCL-FRESH filter with blind LMS adaptation.
//! - [`detector`]: three-frequency conjugate-CAF statistic and CFAR thresholds.
//! - [`harness`]: experiment specs, parallel sweeps and CSV emission.
//!
//! Trials are data-parallel. With the default `parallel` feature they run on
//! the rayon pool; without it they run sequentially. Both paths produce
//! identical results because every trial owns an rng stream derived from
//! `(seed, stream tag, trial index)`.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caf;
pub mod detector;
pub mod energy;
mod error;
pub mod fresh;
pub mod harness;
pub mod par;
pub(crate) mod phase;
pub mod rng;
pub mod sigmodel;

pub use error::{Error, Result};
pub use num_complex::Complex64;

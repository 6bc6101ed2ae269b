//! Exact-index oscillator phases.
//!
//! Phases are always derived from the integer sample index, never accumulated
//! in floating point over a whole record. When both the frequency and the
//! sample rate are whole numbers of hertz the reduction `f·n mod fs` is done
//! in integer arithmetic and is exact.

use num_complex::Complex64;
use std::f64::consts::TAU;

const EXACT_LIMIT: f64 = 9.007_199_254_740_992e15; // 2^53

/// Fractional cycles of `exp(j2π·freq·n/fs)` in `[0, 1)`.
pub(crate) fn cycles(freq_hz: f64, sample_rate_hz: f64, n: u64) -> f64 {
    let integral = freq_hz.fract() == 0.0
        && sample_rate_hz.fract() == 0.0
        && freq_hz.abs() < EXACT_LIMIT
        && sample_rate_hz < EXACT_LIMIT;
    if integral {
        let fs = sample_rate_hz as i128;
        let f = (freq_hz as i128).rem_euclid(fs);
        let r = (f * i128::from(n)).rem_euclid(fs);
        return r as f64 / sample_rate_hz;
    }
    let ratio = (freq_hz / sample_rate_hz).rem_euclid(1.0);
    // split n so the product keeps its low-order bits
    let hi = (n >> 20) << 20;
    let lo = n - hi;
    let a = (ratio * hi as f64).rem_euclid(1.0);
    let b = (ratio * lo as f64).rem_euclid(1.0);
    (a + b).rem_euclid(1.0)
}

pub(crate) fn phasor(freq_hz: f64, sample_rate_hz: f64, n: u64) -> Complex64 {
    let (s, c) = (TAU * cycles(freq_hz, sample_rate_hz, n)).sin_cos();
    Complex64::new(c, s)
}

/// Recursive unit-phasor generator, re-anchored to the exact phase every
/// [`Rotator::REANCHOR`] samples to bound rounding drift.
#[derive(Debug, Clone)]
pub(crate) struct Rotator {
    freq_hz: f64,
    sample_rate_hz: f64,
    step: Complex64,
    current: Complex64,
    n: u64,
}

impl Rotator {
    const REANCHOR: u64 = 64;

    pub(crate) fn new(freq_hz: f64, sample_rate_hz: f64, start: u64) -> Self {
        Self {
            freq_hz,
            sample_rate_hz,
            step: phasor(freq_hz, sample_rate_hz, 1),
            current: phasor(freq_hz, sample_rate_hz, start),
            n: start,
        }
    }

    /// Phasor at the current index, then advance by one sample.
    #[inline]
    pub(crate) fn next_phasor(&mut self) -> Complex64 {
        let out = self.current;
        self.n += 1;
        if self.n.is_multiple_of(Self::REANCHOR) {
            self.current = phasor(self.freq_hz, self.sample_rate_hz, self.n);
        } else {
            self.current *= self.step;
        }
        out
    }
}

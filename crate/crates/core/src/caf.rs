//! Cyclic autocorrelation estimation.
//!
//! Naming follows the usual convention where the plain CAF conjugates the
//! second factor and the *conjugate* CAF does not:
//!
//! ```text
//! R^α_xx(k)  = 1/(N−k) Σ x(n)·x*(n+k)·e^{−j2παn/f_s}   (conjugate = false)
//! R^α_xx*(k) = 1/(N−k) Σ x(n)·x(n+k) ·e^{−j2παn/f_s}   (conjugate = true)
//! ```
//!
//! Sums run over `n = 0..N−1−k` (no padding, no wraparound) and are
//! normalized by the number of product terms. Cyclic frequencies are taken
//! modulo the sample rate.

use crate::phase::Rotator;
use crate::sigmodel::{IqBuffer, RadioParams};
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleFreqSpec {
    pub alpha_hz: f64,
    pub lag: usize,
    /// Selects `R_xx*` (no conjugation of the lagged factor).
    pub conjugate: bool,
}

impl CycleFreqSpec {
    pub fn conjugate(alpha_hz: f64, lag: usize) -> Self {
        Self {
            alpha_hz,
            lag,
            conjugate: true,
        }
    }

    pub fn non_conjugate(alpha_hz: f64, lag: usize) -> Self {
        Self {
            alpha_hz,
            lag,
            conjugate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CafEstimate {
    pub spec: CycleFreqSpec,
    pub value: Complex64,
    /// Number of product terms, `N − lag`.
    pub n_used: usize,
}

fn check(x: &IqBuffer, spec: &CycleFreqSpec) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("CAF of an empty buffer"));
    }
    if spec.lag >= x.len() {
        return Err(Error::invalid(format!(
            "lag {} must be smaller than buffer length {}",
            spec.lag,
            x.len()
        )));
    }
    if !spec.alpha_hz.is_finite() {
        return Err(Error::invalid("cyclic frequency must be finite"));
    }
    Ok(x.len() - spec.lag)
}

pub fn estimate_caf(x: &IqBuffer, spec: CycleFreqSpec) -> Result<CafEstimate> {
    let n_used = check(x, &spec)?;
    let s = x.samples();
    let head = &s[..n_used];
    let lagged = &s[spec.lag..];
    let mut rot = Rotator::new(-spec.alpha_hz, x.sample_rate_hz(), 0);
    let mut acc = Complex64::new(0.0, 0.0);
    if spec.conjugate {
        for (a, b) in head.iter().zip(lagged) {
            acc += a * b * rot.next_phasor();
        }
    } else {
        for (a, b) in head.iter().zip(lagged) {
            acc += a * b.conj() * rot.next_phasor();
        }
    }
    Ok(CafEstimate {
        spec,
        value: acc / n_used as f64,
        n_used,
    })
}

/// Reference estimator: one term at a time, phase computed directly from
/// `2π·α·n/f_s`, compensated (Neumaier) summation. Shares no code with
/// [`estimate_caf`] beyond argument checking.
pub fn estimate_caf_oracle(x: &IqBuffer, spec: CycleFreqSpec) -> Result<CafEstimate> {
    let n_used = check(x, &spec)?;
    let s = x.samples();
    let fs = x.sample_rate_hz();
    let mut re = Neumaier::default();
    let mut im = Neumaier::default();
    for n in 0..n_used {
        let a = s[n];
        let b = if spec.conjugate {
            s[n + spec.lag]
        } else {
            s[n + spec.lag].conj()
        };
        let prod_re = a.re * b.re - a.im * b.im;
        let prod_im = a.re * b.im + a.im * b.re;
        let (sin, cos) = (-TAU * spec.alpha_hz * n as f64 / fs).sin_cos();
        re.add(prod_re * cos);
        re.add(-prod_im * sin);
        im.add(prod_re * sin);
        im.add(prod_im * cos);
    }
    Ok(CafEstimate {
        spec,
        value: Complex64::new(re.total(), im.total()) / n_used as f64,
        n_used,
    })
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// [`estimate_caf`] over a list of cyclic frequencies, order preserved.
pub fn caf_profile(
    x: &IqBuffer,
    alphas: &[f64],
    lag: usize,
    conjugate: bool,
) -> Result<Vec<CafEstimate>> {
    if alphas.is_empty() {
        return Err(Error::invalid("empty cyclic frequency list"));
    }
    alphas
        .iter()
        .map(|&alpha_hz| {
            estimate_caf(
                x,
                CycleFreqSpec {
                    alpha_hz,
                    lag,
                    conjugate,
                },
            )
        })
        .collect()
}

/// Reduce a frequency into `[0, f_s)`.
pub fn wrap_frequency(alpha_hz: f64, sample_rate_hz: f64) -> f64 {
    let r = alpha_hz.rem_euclid(sample_rate_hz);
    // rem_euclid can round up to exactly f_s for tiny negative inputs
    if r >= sample_rate_hz {
        0.0
    } else {
        r
    }
}

/// BPSK cycle frequencies up to harmonic `k_max`, reduced into `[0, f_s)`,
/// sorted and deduplicated.
///
/// Non-conjugate: `±m·baud` for `1 ≤ m ≤ k_max`.
/// Conjugate: `±2f_c ± m·baud` for `0 ≤ m ≤ k_max`.
pub fn bpsk_cycle_frequencies(params: &RadioParams, k_max: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    if k_max == 0 {
        return Err(Error::invalid(
            "k_max must be at least 1; alpha = 0 is ordinary stationarity",
        ));
    }
    let fs = params.sample_rate_hz;
    let baud = params.baud_hz;
    let two_fc = 2.0 * params.carrier_hz;
    let mut plain = Vec::new();
    let mut conj = Vec::new();
    for m in 0..=k_max {
        let shift = f64::from(m) * baud;
        if m >= 1 {
            plain.push(wrap_frequency(shift, fs));
            plain.push(wrap_frequency(-shift, fs));
        }
        for sign in [1.0, -1.0] {
            conj.push(wrap_frequency(sign * two_fc + shift, fs));
            conj.push(wrap_frequency(sign * two_fc - shift, fs));
        }
    }
    Ok((sorted_unique(plain), sorted_unique(conj)))
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use crate::sigmodel::{add, gen_awgn, gen_bpsk, snr_to_amplitude};
    use rand::Rng;

    const FS: f64 = 102_400.0;

    fn tone(f0: f64, n: usize) -> IqBuffer {
        let s = (0..n)
            .map(|i| Complex64::from_polar(1.0, TAU * f0 * i as f64 / FS))
            .collect();
        IqBuffer::new(s, FS).unwrap()
    }

    #[test]
    fn constant_input_gives_power() {
        let c = Complex64::new(0.6, -0.8) * 3.0;
        let x = IqBuffer::new(vec![c; 50], FS).unwrap();
        for est in [estimate_caf, estimate_caf_oracle] {
            let r = est(&x, CycleFreqSpec::non_conjugate(0.0, 0)).unwrap();
            assert!((r.value - Complex64::new(9.0, 0.0)).norm() < 1e-12);
            assert_eq!(r.n_used, 50);
        }
    }

    #[test]
    fn tone_conjugate_caf_at_twice_frequency() {
        // hand check for N = 4: each term is e^{j2π f0 n}² e^{−j2π 2f0 n} = 1
        let f0 = 1234.0;
        for n in [4, 37, 1000] {
            let r = estimate_caf(&tone(f0, n), CycleFreqSpec::conjugate(2.0 * f0, 0)).unwrap();
            assert!((r.value - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn tone_full_period_cancels() {
        // f0·T_s = m/N with m = 3, N = 64
        let n = 64;
        let f0 = 3.0 * FS / n as f64;
        let r = estimate_caf(&tone(f0, n), CycleFreqSpec::conjugate(0.0, 0)).unwrap();
        assert!(r.value.norm() < 1e-12);
    }

    #[test]
    fn last_lag_uses_single_term() {
        let x = IqBuffer::new(
            vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 3.0),
            ],
            FS,
        )
        .unwrap();
        let r = estimate_caf_oracle(&x, CycleFreqSpec::conjugate(0.0, 2)).unwrap();
        assert_eq!(r.n_used, 1);
        assert!((r.value - Complex64::new(0.0, 6.0)).norm() < 1e-15);
        let r = estimate_caf(&x, CycleFreqSpec::non_conjugate(0.0, 2)).unwrap();
        assert!((r.value - Complex64::new(0.0, -6.0)).norm() < 1e-15);
    }

    #[test]
    fn argument_errors() {
        let x = IqBuffer::zeros(4, FS);
        assert!(estimate_caf(&IqBuffer::zeros(0, FS), CycleFreqSpec::conjugate(0.0, 0)).is_err());
        assert!(estimate_caf(&x, CycleFreqSpec::conjugate(0.0, 4)).is_err());
        assert!(estimate_caf_oracle(&x, CycleFreqSpec::conjugate(0.0, 4)).is_err());
        assert!(caf_profile(&x, &[], 0, true).is_err());
    }

    #[test]
    fn profile_singleton_matches_estimate() {
        let mut rng = trial_rng(2, 0, 0);
        let x = gen_awgn(300, 1.0, FS, &mut rng, true).unwrap();
        let p = caf_profile(&x, &[1000.0], 3, true).unwrap();
        assert_eq!(
            p,
            vec![estimate_caf(&x, CycleFreqSpec::conjugate(1000.0, 3)).unwrap()]
        );
    }

    #[test]
    fn real_buffer_conjugation_is_irrelevant() {
        let mut rng = trial_rng(4, 0, 0);
        let x = gen_awgn(500, 1.0, FS, &mut rng, false).unwrap();
        for alpha in [0.0, 3200.0, 61440.0] {
            let a = estimate_caf(&x, CycleFreqSpec::conjugate(alpha, 2)).unwrap();
            let b = estimate_caf(&x, CycleFreqSpec::non_conjugate(alpha, 2)).unwrap();
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn amplitude_scaling() {
        let mut rng = trial_rng(6, 0, 0);
        let x = gen_awgn(400, 1.0, FS, &mut rng, true).unwrap();
        let x2 = x.scaled(Complex64::new(2.0, 0.0));
        for conjugate in [true, false] {
            let spec = CycleFreqSpec {
                alpha_hz: 5000.0,
                lag: 1,
                conjugate,
            };
            let a = estimate_caf(&x, spec).unwrap().value;
            let b = estimate_caf(&x2, spec).unwrap().value;
            assert!((b - a * 4.0).norm() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_on_random_buffers() {
        let mut rng = trial_rng(8, 0, 0);
        for _ in 0..30 {
            let n = rng.random_range(1..=512);
            let x = gen_awgn(n, 1.0, FS, &mut rng, true).unwrap();
            let spec = CycleFreqSpec {
                alpha_hz: rng.random_range(-FS..2.0 * FS),
                lag: rng.random_range(0..n),
                conjugate: rng.random(),
            };
            let a = estimate_caf(&x, spec).unwrap().value;
            let b = estimate_caf_oracle(&x, spec).unwrap().value;
            assert!((a - b).norm() <= 1e-10 * b.norm().max(1e-300), "{spec:?}");
        }
    }

    #[test]
    fn bpsk_cycle_frequency_table() {
        let p = RadioParams::default();
        let (plain, conj) = bpsk_cycle_frequencies(&p, 1).unwrap();
        assert_eq!(plain, vec![3200.0, 99_200.0]);
        for a in [61_440.0, 64_640.0, 58_240.0] {
            assert!(conj.contains(&a), "{a}");
        }
        // −2f_c family: 102400 − 61440 = 40960, ± 3200
        assert_eq!(
            conj,
            vec![37_760.0, 40_960.0, 44_160.0, 58_240.0, 61_440.0, 64_640.0]
        );
        assert!(bpsk_cycle_frequencies(&p, 0).is_err());

        let base = RadioParams {
            carrier_hz: 0.0,
            ..p
        };
        let (plain, conj) = bpsk_cycle_frequencies(&base, 2).unwrap();
        let mut with_zero = plain.clone();
        with_zero.insert(0, 0.0);
        assert_eq!(conj, with_zero);
    }

    #[test]
    fn bpsk_peak_at_twice_carrier() {
        let p = RadioParams::default();
        let mut rng = trial_rng(12, 0, 0);
        let a = snr_to_amplitude(20.0, 1.0).unwrap();
        let x = gen_bpsk(&p, 32_000, a, &mut rng).unwrap();
        let w = gen_awgn(32_000, 1.0, p.sample_rate_hz, &mut rng, true).unwrap();
        let r = add(&x, &w).unwrap();
        let on = estimate_caf(&r, CycleFreqSpec::conjugate(61_440.0, 0))
            .unwrap()
            .value
            .norm();
        let off_alphas: Vec<f64> = (0..40).map(|i| 1_000.0 + 1_317.0 * i as f64).collect();
        let mut off: Vec<f64> = caf_profile(&r, &off_alphas, 0, true)
            .unwrap()
            .iter()
            .map(|e| e.value.norm())
            .collect();
        off.sort_by(f64::total_cmp);
        let median = off[off.len() / 2];
        assert!(on > 10.0 * median, "on {on} median {median}");
    }
}

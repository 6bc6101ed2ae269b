//! Energy detection baseline.
//!
//! The closed forms follow the central-limit approximation with variance
//! `2Nσ⁴` for the energy statistic, which is exact in the real-Gaussian case.
//! For circular complex noise the variance is `Nσ⁴`, so the sweeps calibrate
//! energy thresholds empirically instead of trusting these formulas.

use crate::sigmodel::IqBuffer;
use crate::{Error, Result};
use std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDetectorParams {
    pub n_samples: usize,
    pub noise_var: f64,
    pub signal_var: f64,
    pub uncertainty_db: f64,
}

impl EnergyDetectorParams {
    pub fn validate(&self) -> Result<()> {
        check_n_var(self.n_samples, self.noise_var)?;
        if !(self.signal_var >= 0.0) {
            return Err(Error::invalid("signal_var must be non-negative"));
        }
        if !(self.uncertainty_db >= 0.0) {
            return Err(Error::invalid("uncertainty_db must be non-negative"));
        }
        Ok(())
    }
}

/// Which noise bound sets the threshold under noise-variance uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorstCaseConvention {
    /// Threshold from the low bound `σ²·10^(−a/10)`, detection evaluated at
    /// the high bound `σ²·10^(a/10)`.
    #[default]
    LowSetsThreshold,
    /// Threshold from the high bound, detection evaluated at the low bound.
    /// This is the pessimistic SNR-wall convention: it guarantees Pf for any
    /// noise level inside the uncertainty interval.
    HighSetsThreshold,
}

/// Σ|r(n)|².
pub fn energy_statistic(r: &IqBuffer) -> f64 {
    r.samples().iter().map(|z| z.norm_sqr()).sum()
}

/// Gaussian tail probability `P(Z > x)`.
///
/// Evaluated as `erfc(x/√2)/2`; `libm::erfc` is accurate to a few ulp, well
/// inside 1e−12 absolute on `|x| ≤ 8`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Bracketed bisection followed by Newton polishing; the result satisfies
/// `|Q(x) − p| < 1e−10` (far tighter in practice).
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    // Q'(x) = −φ(x)
    for _ in 0..3 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf < 1e-300 {
            break;
        }
        let step = (q_function(x) - p) / pdf;
        if !step.is_finite() {
            break;
        }
        x += step;
    }
    Ok(x)
}

fn check_n_var(n: usize, noise_var: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_var must be positive, got {noise_var}"
        )));
    }
    Ok(())
}

/// `Q((λ − Nσ²)/√(2Nσ⁴))`.
pub fn closed_form_pf(lambda: f64, n: usize, noise_var: f64) -> Result<f64> {
    check_n_var(n, noise_var)?;
    let n = n as f64;
    Ok(q_function(
        (lambda - n * noise_var) / (2.0 * n * noise_var * noise_var).sqrt(),
    ))
}

/// `Q((λ − N(σ_w² + σ_x²))/√(2N(σ_w² + σ_x²)²))`.
pub fn closed_form_pd(lambda: f64, n: usize, noise_var: f64, signal_var: f64) -> Result<f64> {
    check_n_var(n, noise_var)?;
    if !(signal_var >= 0.0) {
        return Err(Error::invalid("signal_var must be non-negative"));
    }
    let total = noise_var + signal_var;
    let n = n as f64;
    Ok(q_function(
        (lambda - n * total) / (2.0 * n * total * total).sqrt(),
    ))
}

/// Threshold with `closed_form_pf(λ) = pf`.
pub fn threshold_for_pf(pf: f64, n: usize, noise_var: f64) -> Result<f64> {
    check_n_var(n, noise_var)?;
    let z = q_inverse(pf)?;
    let nf = n as f64;
    Ok(nf * noise_var + z * (2.0 * nf * noise_var * noise_var).sqrt())
}

/// `(σ²·10^(−a/10), σ²·10^(a/10))`.
pub fn uncertainty_bounds(noise_var: f64, a_db: f64) -> Result<(f64, f64)> {
    if !(a_db >= 0.0) {
        return Err(Error::invalid("uncertainty must be non-negative"));
    }
    let f = 10f64.powf(a_db / 10.0);
    Ok((noise_var / f, noise_var * f))
}

/// Detection probability under noise uncertainty with the default
/// [`WorstCaseConvention::LowSetsThreshold`].
pub fn worst_case_pd(pf: f64, n: usize, noise_var: f64, signal_var: f64, a_db: f64) -> Result<f64> {
    worst_case_pd_with(
        pf,
        n,
        noise_var,
        signal_var,
        a_db,
        WorstCaseConvention::default(),
    )
}

pub fn worst_case_pd_with(
    pf: f64,
    n: usize,
    noise_var: f64,
    signal_var: f64,
    a_db: f64,
    convention: WorstCaseConvention,
) -> Result<f64> {
    EnergyDetectorParams {
        n_samples: n,
        noise_var,
        signal_var,
        uncertainty_db: a_db,
    }
    .validate()?;
    let (low, high) = uncertainty_bounds(noise_var, a_db)?;
    let (threshold_var, detect_var) = match convention {
        WorstCaseConvention::LowSetsThreshold => (low, high),
        WorstCaseConvention::HighSetsThreshold => (high, low),
    };
    let lambda = threshold_for_pf(pf, n, threshold_var)?;
    closed_form_pd(lambda, n, detect_var, signal_var)
}

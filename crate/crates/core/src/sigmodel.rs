//! Signal model: complex BPSK primary user in an AWGN channel.
//!
//! The transmitted signal is `x(n) = A·c[⌊n/S⌋]·exp(j2π·f_c·n/f_s)` with
//! i.i.d. equiprobable symbols `c ∈ {+1, −1}`, full-duty-cycle rectangular
//! pulses of `S = f_s/baud` samples, symbol boundaries at sample 0 and zero
//! carrier phase.

use crate::phase::Rotator;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub carrier_hz: f64,
    pub baud_hz: f64,
    pub sample_rate_hz: f64,
    pub noise_var: f64,
    pub snr_db: f64,
}

impl Default for RadioParams {
    /// f_c = 30720 Hz, 3200 baud, f_s = 32 × baud, unit noise variance, 0 dB.
    fn default() -> Self {
        Self {
            carrier_hz: 30_720.0,
            baud_hz: 3_200.0,
            sample_rate_hz: 32.0 * 3_200.0,
            noise_var: 1.0,
            snr_db: 0.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_var must be positive, got {}",
                self.noise_var
            )));
        }
        if !(self.baud_hz > 0.0 && self.sample_rate_hz > 0.0)
            || !self.baud_hz.is_finite()
            || !self.sample_rate_hz.is_finite()
        {
            return Err(Error::invalid("baud and sample rate must be positive"));
        }
        // f_c = 0 is allowed as the degenerate baseband case.
        if !(self.carrier_hz >= 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::invalid("carrier must be non-negative"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        self.samples_per_symbol().map(|_| ())
    }

    /// `f_s / baud`, which must be a positive integer.
    pub fn samples_per_symbol(&self) -> Result<usize> {
        let sps = self.sample_rate_hz / self.baud_hz;
        if sps < 1.0 || (sps - sps.round()).abs() > 1e-9 * sps {
            return Err(Error::invalid(format!(
                "sample rate {} is not an integer multiple of baud {}",
                self.sample_rate_hz, self.baud_hz
            )));
        }
        Ok(sps.round() as usize)
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn with_snr_db(self, snr_db: f64) -> Self {
        Self { snr_db, ..self }
    }
}

/// Complex baseband samples at a fixed sample rate. Sample `n` sits at time
/// `n / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl IqBuffer {
    /// Fails if any sample is NaN or infinite, or the rate is not positive.
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|z| !z.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate_hz,
        }
    }

    pub(crate) fn from_trusted(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        debug_assert!(samples.iter().all(|z| z.is_finite()));
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Multiply every sample by a complex constant.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self::from_trusted(
            self.samples.iter().map(|&z| z * c).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Amplitude `A` such that a constant-envelope signal of power `A²` sits at
/// `snr_db` above noise of variance `noise_var`.
pub fn snr_to_amplitude(snr_db: f64, noise_var: f64) -> Result<f64> {
    if !(noise_var > 0.0) {
        return Err(Error::invalid(format!(
            "noise_var must be positive, got {noise_var}"
        )));
    }
    Ok((noise_var * 10f64.powf(snr_db / 10.0)).sqrt())
}

pub fn gen_bpsk<R: Rng + ?Sized>(
    params: &RadioParams,
    n_samples: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<IqBuffer> {
    params.validate()?;
    if !amplitude.is_finite() {
        return Err(Error::invalid("amplitude must be finite"));
    }
    let sps = params.samples_per_symbol()?;
    let mut carrier = Rotator::new(params.carrier_hz, params.sample_rate_hz, 0);
    let mut samples = Vec::with_capacity(n_samples);
    let mut symbol = 1.0;
    for n in 0..n_samples {
        if n % sps == 0 {
            symbol = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        samples.push(carrier.next_phasor() * (amplitude * symbol));
    }
    Ok(IqBuffer::from_trusted(samples, params.sample_rate_hz))
}

/// Gaussian noise. Complex noise is circularly symmetric with per-component
/// variance `noise_var/2`, so `E|w|² = noise_var`; real noise has variance
/// `noise_var` in the real part and a zero imaginary part.
pub fn gen_awgn<R: Rng + ?Sized>(
    n_samples: usize,
    noise_var: f64,
    sample_rate_hz: f64,
    rng: &mut R,
    complex: bool,
) -> Result<IqBuffer> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_var must be positive, got {noise_var}"
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let samples = if complex {
        let sd = (noise_var / 2.0).sqrt();
        (0..n_samples)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(sd * re, sd * im)
            })
            .collect()
    } else {
        let sd = noise_var.sqrt();
        (0..n_samples)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                Complex64::new(sd * re, 0.0)
            })
            .collect()
    };
    Ok(IqBuffer::from_trusted(samples, sample_rate_hz))
}

/// Element-wise sum `a + b`.
pub fn add(a: &IqBuffer, b: &IqBuffer) -> Result<IqBuffer> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::Shape(format!(
            "sample rate mismatch: {} vs {}",
            a.sample_rate_hz, b.sample_rate_hz
        )));
    }
    let samples = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| x + y)
        .collect();
    Ok(IqBuffer::from_trusted(samples, a.sample_rate_hz))
}

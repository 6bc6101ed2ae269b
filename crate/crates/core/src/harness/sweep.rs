use super::{CalibrationStore, EnergyThreshold, Method, SweepRecord};
use crate::caf::caf_profile;
use crate::detector::{
    calibrate_threshold, spec_hash, CalibratedThreshold, CycloDetector, DetectorOutcome, Pipeline,
    TestStatisticSpec,
};
use crate::energy::{energy_statistic, threshold_for_pf, uncertainty_bounds, WorstCaseConvention};
use crate::fresh::FreshConfig;
use crate::par;
use crate::rng::{fnv1a64, trial_rng};
use crate::sigmodel::{add, gen_awgn, gen_bpsk, snr_to_amplitude, IqBuffer, RadioParams};
use crate::{Error, Result};
use rand::Rng;
use std::io::Write;

/// One detection experiment: a single method at a single record length over
/// an SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub radio: RadioParams,
    pub method: Method,
    pub n_samples: usize,
    pub snr_grid_db: Vec<f64>,
    pub pf_target: f64,
    /// H1 trials per SNR cell.
    pub n_trials: usize,
    /// Held-out H0 trials used to measure Pf (once per method and length).
    pub n_h0_trials: usize,
    pub n_calibration_trials: usize,
    pub uncertainty_db: f64,
    pub worst_case: WorstCaseConvention,
    pub energy_threshold: EnergyThreshold,
    pub fresh: FreshConfig,
    pub statistic: TestStatisticSpec,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid has non-finite entries".into()));
        }
        if self.n_trials == 0 || self.n_h0_trials == 0 {
            return Err(Error::Config("trial counts must be positive".into()));
        }
        if !(self.pf_target > 0.0 && self.pf_target < 1.0) {
            return Err(Error::Config(format!(
                "pf target {} outside (0, 1)",
                self.pf_target
            )));
        }
        if !(self.uncertainty_db >= 0.0) {
            return Err(Error::Config("uncertainty_db must be non-negative".into()));
        }
        if self.method == Method::CycloFresh {
            self.fresh.validate()?;
            if self.fresh.sample_rate_hz != self.radio.sample_rate_hz {
                return Err(Error::Config(
                    "FRESH sample rate differs from radio sample rate".into(),
                ));
            }
        }
        if self.statistic.lag >= self.n_samples {
            return Err(Error::Config(
                "statistic lag must be below n_samples".into(),
            ));
        }
        Ok(())
    }

    /// `(threshold-setting noise, H1 noise)` variances.
    pub fn noise_levels(&self) -> Result<(f64, f64)> {
        let nominal = self.radio.noise_var;
        if self.method != Method::EnergyUncertain {
            return Ok((nominal, nominal));
        }
        let (low, high) = uncertainty_bounds(nominal, self.uncertainty_db)?;
        Ok(match self.worst_case {
            WorstCaseConvention::LowSetsThreshold => (low, high),
            WorstCaseConvention::HighSetsThreshold => (high, low),
        })
    }

    fn cyclo_detector(&self, h0_noise: f64) -> Option<CycloDetector> {
        let pipeline = match self.method {
            Method::CycloDirect => Pipeline::Direct,
            Method::CycloFresh => Pipeline::Fresh(self.fresh.clone()),
            _ => return None,
        };
        Some(CycloDetector {
            pipeline,
            statistic: self.statistic.clone(),
            n_samples: self.n_samples,
            noise_var: h0_noise,
        })
    }

    /// Fingerprint of the thresholded pipeline.
    pub fn spec_hash(&self) -> Result<u64> {
        let (h0_noise, _) = self.noise_levels()?;
        Ok(match self.cyclo_detector(h0_noise) {
            Some(det) => det.spec_hash(),
            None => spec_hash(&format!(
                "energy|{}|n={}|noise={:?}",
                self.energy_threshold.name(),
                self.n_samples,
                h0_noise
            )),
        })
    }

    /// Statistic of one received record under this method.
    pub fn statistic_of(&self, r: IqBuffer) -> Result<f64> {
        let (h0_noise, _) = self.noise_levels()?;
        match self.cyclo_detector(h0_noise) {
            Some(det) => det.statistic_of(r),
            None => Ok(energy_statistic(&r)),
        }
    }

    /// Threshold from `store` or freshly calibrated (and inserted).
    pub fn threshold(&self, store: &mut CalibrationStore) -> Result<CalibratedThreshold> {
        let hash = self.spec_hash()?;
        let closed_form = matches!(self.method, Method::EnergyKnown | Method::EnergyUncertain)
            && self.energy_threshold == EnergyThreshold::ClosedForm;
        let n_cal = if closed_form {
            0
        } else {
            self.n_calibration_trials
        };
        if let Some(t) = store.lookup(hash, self.pf_target, n_cal, self.seed) {
            return Ok(*t);
        }
        let (h0_noise, _) = self.noise_levels()?;
        let t = if closed_form {
            CalibratedThreshold {
                lambda: threshold_for_pf(self.pf_target, self.n_samples, h0_noise)?,
                pf_target: self.pf_target,
                n_calibration_trials: 0,
                spec_hash: hash,
                seed: self.seed,
            }
        } else {
            calibrate_threshold(
                |rng| {
                    let w = gen_awgn(
                        self.n_samples,
                        h0_noise,
                        self.radio.sample_rate_hz,
                        rng,
                        true,
                    )?;
                    self.statistic_of(w)
                },
                self.pf_target,
                self.n_calibration_trials,
                self.seed,
                hash,
            )?
        };
        store.insert(t);
        Ok(t)
    }
}

/// Received record for one trial: optional BPSK at `snr_db` (relative to the
/// nominal noise variance) plus complex AWGN of variance `noise_var`.
/// Symbols are drawn before noise.
pub fn received_record<R: Rng + ?Sized>(
    radio: &RadioParams,
    n_samples: usize,
    signal_snr_db: Option<f64>,
    noise_var: f64,
    rng: &mut R,
) -> Result<IqBuffer> {
    let w = |rng: &mut R| gen_awgn(n_samples, noise_var, radio.sample_rate_hz, rng, true);
    match signal_snr_db {
        None => w(rng),
        Some(snr_db) => {
            let a = snr_to_amplitude(snr_db, radio.noise_var)?;
            let x = gen_bpsk(radio, n_samples, a, rng)?;
            add(&x, &w(rng)?)
        }
    }
}

fn h0_tag(n_samples: usize, noise_var: f64) -> u64 {
    fnv1a64(format!("h0-heldout|n={n_samples}|noise={noise_var:?}").as_bytes())
}

fn h1_tag(n_samples: usize, snr_db: f64) -> u64 {
    fnv1a64(format!("h1|n={n_samples}|snr={snr_db:?}").as_bytes())
}

/// Decisions of `n` trials; divergence counts as "no detection" and is tallied.
fn count_detections<F>(n: usize, lambda: f64, trial: F) -> Result<(usize, usize)>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let outcomes = par::map_indexed(n, |i| match trial(i) {
        Ok(t) => Ok(Some(DetectorOutcome::new(t, lambda).decision)),
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    });
    let mut hits = 0;
    let mut diverged = 0;
    for o in outcomes {
        match o? {
            Some(true) => hits += 1,
            Some(false) => {}
            None => diverged += 1,
        }
    }
    // more than 1%
    if diverged * 100 > n {
        return Err(Error::DivergenceDominated {
            diverged,
            trials: n,
        });
    }
    Ok((hits, diverged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub threshold: CalibratedThreshold,
    pub diverged_trials: usize,
}

/// Run every SNR cell of `spec`. The threshold comes from `store` when a
/// matching one exists and is calibrated (and stored) otherwise.
pub fn run_detection_sweep(
    spec: &ExperimentSpec,
    store: &mut CalibrationStore,
) -> Result<SweepOutcome> {
    spec.validate()?;
    let threshold = spec.threshold(store)?;
    threshold.check(spec.spec_hash()?)?;
    let (h0_noise, h1_noise) = spec.noise_levels()?;
    let radio = &spec.radio;
    let n = spec.n_samples;

    let tag = h0_tag(n, h0_noise);
    let (false_alarms, mut diverged) = count_detections(spec.n_h0_trials, threshold.lambda, |i| {
        let mut rng = trial_rng(spec.seed, tag, i as u64);
        spec.statistic_of(received_record(radio, n, None, h0_noise, &mut rng)?)
    })?;
    let empirical_pf = false_alarms as f64 / spec.n_h0_trials as f64;

    let mut records = Vec::with_capacity(spec.snr_grid_db.len());
    for &snr_db in &spec.snr_grid_db {
        let tag = h1_tag(n, snr_db);
        let (hits, d) = count_detections(spec.n_trials, threshold.lambda, |i| {
            let mut rng = trial_rng(spec.seed, tag, i as u64);
            spec.statistic_of(received_record(radio, n, Some(snr_db), h1_noise, &mut rng)?)
        })?;
        diverged += d;
        records.push(SweepRecord {
            method: spec.method,
            n_samples: n,
            snr_db,
            empirical_pd: hits as f64 / spec.n_trials as f64,
            empirical_pf,
            n_trials: spec.n_trials,
            lambda: threshold.lambda,
            seed: spec.seed,
        });
    }
    Ok(SweepOutcome {
        records,
        threshold,
        diverged_trials: diverged,
    })
}

/// Run several experiments and concatenate their records.
pub fn run_plan(
    specs: &[ExperimentSpec],
    store: &mut CalibrationStore,
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for spec in specs {
        out.extend(run_detection_sweep(spec, store)?.records);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CafRow {
    pub alpha_hz: f64,
    pub lag: usize,
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
}

/// CAF profile of `x` as table rows.
pub fn caf_rows(x: &IqBuffer, alphas: &[f64], lag: usize, conjugate: bool) -> Result<Vec<CafRow>> {
    Ok(caf_profile(x, alphas, lag, conjugate)?
        .into_iter()
        .map(|e| CafRow {
            alpha_hz: e.spec.alpha_hz,
            lag: e.spec.lag,
            re: e.value.re,
            im: e.value.im,
            magnitude: e.value.norm(),
        })
        .collect())
}

/// `alpha_hz,lag,re,im,magnitude`, shortest round-trip floats.
pub fn write_caf_csv<W: Write>(rows: &[CafRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "alpha_hz,lag,re,im,magnitude")?;
    for r in rows {
        writeln!(
            out,
            "{:?},{},{:?},{:?},{:?}",
            r.alpha_hz, r.lag, r.re, r.im, r.magnitude
        )?;
    }
    Ok(())
}

//! Cyclostationary hypothesis test on the conjugate CAF.
//!
//! The statistic combines the conjugate CAF of the (optionally FRESH-filtered)
//! signal at `2f_c` and `2f_c ± baud`. Thresholds are set empirically: H0
//! trials run through the full pipeline and λ is an upper order statistic of
//! the collected values. A threshold is bound to a fingerprint of
//! `(record length, pipeline, statistic)` so it cannot be silently reused for
//! a configuration it was not calibrated on.

use crate::caf::{estimate_caf, CycleFreqSpec};
use crate::fresh::{run_blind, FreshConfig};
use crate::par;
use crate::rng::{fnv1a64, trial_rng, TrialRng};
use crate::sigmodel::{IqBuffer, RadioParams};
use crate::{Complex64, Error, Result};

/// How the three complex CAF values become one real statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// `Σ|R_i|`; insensitive to carrier and timing phase.
    #[default]
    MagnitudeSum,
    /// `|Σ R_i|`.
    SumMagnitude,
}

impl Combine {
    pub fn name(self) -> &'static str {
        match self {
            Combine::MagnitudeSum => "magnitude-sum",
            Combine::SumMagnitude => "sum-magnitude",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "magnitude-sum" => Ok(Combine::MagnitudeSum),
            "sum-magnitude" => Ok(Combine::SumMagnitude),
            _ => Err(Error::Config(format!("unknown combine rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestStatisticSpec {
    pub alphas: Vec<f64>,
    pub lag: usize,
    pub combine: Combine,
    /// Leading samples (e.g. the LMS transient) excluded from the CAF.
    pub discard_prefix: usize,
}

impl TestStatisticSpec {
    /// `{2f_c, 2f_c + baud, 2f_c − baud}`, lag 0, magnitude sum, no discard.
    pub fn standard(radio: &RadioParams) -> Self {
        let two_fc = 2.0 * radio.carrier_hz;
        Self {
            alphas: vec![two_fc, two_fc + radio.baud_hz, two_fc - radio.baud_hz],
            lag: 0,
            combine: Combine::MagnitudeSum,
            discard_prefix: 0,
        }
    }

    pub fn describe(&self) -> String {
        let alphas: Vec<String> = self.alphas.iter().map(|a| format!("{a:?}")).collect();
        format!(
            "alphas={};lag={};combine={};discard={}",
            alphas.join(","),
            self.lag,
            self.combine.name(),
            self.discard_prefix
        )
    }
}

/// The statistic `T` for a (filtered) record `y`.
pub fn test_statistic(y: &IqBuffer, spec: &TestStatisticSpec) -> Result<f64> {
    if spec.alphas.is_empty() {
        return Err(Error::Config(
            "test statistic needs at least one cyclic frequency".into(),
        ));
    }
    let view;
    let y = if spec.discard_prefix > 0 {
        if spec.discard_prefix >= y.len() {
            return Err(Error::invalid(format!(
                "discard prefix {} leaves nothing of a {}-sample record",
                spec.discard_prefix,
                y.len()
            )));
        }
        view = IqBuffer::from_trusted(
            y.samples()[spec.discard_prefix..].to_vec(),
            y.sample_rate_hz(),
        );
        &view
    } else {
        y
    };
    let mut mag = 0.0;
    let mut sum = Complex64::new(0.0, 0.0);
    for &alpha_hz in &spec.alphas {
        let r = estimate_caf(y, CycleFreqSpec::conjugate(alpha_hz, spec.lag))?.value;
        mag += r.norm();
        sum += r;
    }
    Ok(match spec.combine {
        Combine::MagnitudeSum => mag,
        Combine::SumMagnitude => sum.norm(),
    })
}

/// Signal path in front of the statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    /// Statistic applied to the received signal.
    Direct,
    /// Blind FRESH adaptation on the record, statistic on the filter output.
    Fresh(FreshConfig),
}

impl Pipeline {
    pub fn process(&self, r: IqBuffer) -> Result<IqBuffer> {
        match self {
            Pipeline::Direct => Ok(r),
            Pipeline::Fresh(cfg) => Ok(run_blind(&r, cfg)?.output),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Pipeline::Direct => "direct".into(),
            Pipeline::Fresh(cfg) => format!("fresh[{}]", cfg.describe()),
        }
    }
}

/// A pipeline plus statistic, bound to a record length and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct CycloDetector {
    pub pipeline: Pipeline,
    pub statistic: TestStatisticSpec,
    pub n_samples: usize,
    /// H0 noise variance the threshold is calibrated for.
    pub noise_var: f64,
}

impl CycloDetector {
    pub fn spec_hash(&self) -> u64 {
        spec_hash(&format!(
            "cyclo|{}|{}|n={}|noise={:?}",
            self.pipeline.describe(),
            self.statistic.describe(),
            self.n_samples,
            self.noise_var
        ))
    }

    /// Run the pipeline on a received record and return `T`.
    pub fn statistic_of(&self, r: IqBuffer) -> Result<f64> {
        if r.len() != self.n_samples {
            return Err(Error::Config(format!(
                "detector built for {} samples got {}",
                self.n_samples,
                r.len()
            )));
        }
        let y = self.pipeline.process(r)?;
        test_statistic(&y, &self.statistic)
    }

    /// Decide on an already-processed record `y`.
    pub fn decide(&self, y: &IqBuffer, threshold: &CalibratedThreshold) -> Result<DetectorOutcome> {
        let bound = CycloDetector {
            n_samples: y.len(),
            ..self.clone()
        };
        threshold.check(bound.spec_hash())?;
        let statistic = test_statistic(y, &self.statistic)?;
        Ok(DetectorOutcome::new(statistic, threshold.lambda))
    }
}

pub fn spec_hash(canonical: &str) -> u64 {
    fnv1a64(canonical.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedThreshold {
    pub lambda: f64,
    pub pf_target: f64,
    pub n_calibration_trials: usize,
    pub spec_hash: u64,
    pub seed: u64,
}

impl CalibratedThreshold {
    pub fn check(&self, expected_hash: u64) -> Result<()> {
        if self.spec_hash != expected_hash {
            return Err(Error::Config(format!(
                "threshold calibrated for {:016x} used with {:016x}",
                self.spec_hash, expected_hash
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutcome {
    pub statistic: f64,
    pub lambda: f64,
    pub decision: bool,
}

impl DetectorOutcome {
    /// Strict comparison: a statistic equal to λ is not a detection.
    pub fn new(statistic: f64, lambda: f64) -> Self {
        Self {
            statistic,
            lambda,
            decision: statistic > lambda,
        }
    }
}

/// Minimum calibration trials for `pf_target` (≈50 expected exceedances).
pub fn min_calibration_trials(pf_target: f64) -> usize {
    (50.0 / pf_target - 1e-9).ceil() as usize
}

/// The `⌈n·pf⌉`-th largest value of `stats`.
pub fn threshold_from_statistics(stats: &[f64], pf_target: f64) -> Result<f64> {
    if !(pf_target > 0.0 && pf_target < 1.0) {
        return Err(Error::invalid(format!(
            "pf target {pf_target} outside (0, 1)"
        )));
    }
    if stats.is_empty() {
        return Err(Error::invalid("no calibration statistics"));
    }
    if stats.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("calibration statistics contain NaN"));
    }
    let rank = ((stats.len() as f64 * pf_target) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[rank - 1])
}

/// Stream tag for calibration trials of a given detector hash.
pub fn calibration_tag(spec_hash: u64) -> u64 {
    spec_hash ^ fnv1a64(b"h0-calibration")
}

/// Run `n_trials` H0 trials of `h0_trial` (each with its own stream derived
/// from `(seed, calibration_tag(spec_hash), i)`) and take the empirical
/// `(1 − pf)` quantile.
pub fn calibrate_threshold<F>(
    h0_trial: F,
    pf_target: f64,
    n_trials: usize,
    seed: u64,
    spec_hash: u64,
) -> Result<CalibratedThreshold>
where
    F: Fn(&mut TrialRng) -> Result<f64> + Sync + Send,
{
    if !(pf_target > 0.0 && pf_target < 1.0) {
        return Err(Error::invalid(format!(
            "pf target {pf_target} outside (0, 1)"
        )));
    }
    if (n_trials as f64) * pf_target < 50.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "{n_trials} trials give fewer than 50 expected exceedances at pf {pf_target}; need at least {}",
            min_calibration_trials(pf_target)
        )));
    }
    let tag = calibration_tag(spec_hash);
    let stats = par::try_map_indexed(n_trials, |i| {
        let mut rng = trial_rng(seed, tag, i as u64);
        h0_trial(&mut rng)
    })?;
    Ok(CalibratedThreshold {
        lambda: threshold_from_statistics(&stats, pf_target)?,
        pf_target,
        n_calibration_trials: n_trials,
        spec_hash,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::gen_awgn;
    use std::f64::consts::TAU;

    fn radio() -> RadioParams {
        RadioParams::default()
    }

    fn noise(seed: u64, n: usize) -> IqBuffer {
        gen_awgn(
            n,
            1.0,
            radio().sample_rate_hz,
            &mut trial_rng(seed, 0, 0),
            true,
        )
        .unwrap()
    }

    #[test]
    fn zero_record_statistic() {
        let spec = TestStatisticSpec::standard(&radio());
        assert_eq!(
            test_statistic(&IqBuffer::zeros(800, 102_400.0), &spec).unwrap(),
            0.0
        );
    }

    #[test]
    fn carrier_tone_statistic() {
        // conjugate CAF of e^{j2πf_c n/f_s} at 2f_c is 1; at 2f_c ± baud the
        // phase sequence completes whole turns every 32 samples, so N = 3200
        // sums to zero
        let p = radio();
        let y: Vec<Complex64> = (0..3200)
            .map(|n| Complex64::from_polar(1.0, TAU * p.carrier_hz * n as f64 / p.sample_rate_hz))
            .collect();
        let y = IqBuffer::new(y, p.sample_rate_hz).unwrap();
        let t = test_statistic(&y, &TestStatisticSpec::standard(&p)).unwrap();
        assert!((t - 1.0).abs() < 1e-10, "{t}");
    }

    #[test]
    fn phase_and_scale_behaviour() {
        let spec = TestStatisticSpec::standard(&radio());
        let y = noise(3, 1600);
        let t = test_statistic(&y, &spec).unwrap();
        let rotated = y.scaled(Complex64::from_polar(1.0, std::f64::consts::PI / 3.0));
        assert!((test_statistic(&rotated, &spec).unwrap() - t).abs() < 1e-12 * t.max(1.0));
        let doubled = y.scaled(Complex64::new(2.0, 0.0));
        assert!((test_statistic(&doubled, &spec).unwrap() - 4.0 * t).abs() < 1e-12);
    }

    #[test]
    fn combine_rules_and_discard() {
        let mut spec = TestStatisticSpec::standard(&radio());
        let y = noise(5, 1000);
        let mag = test_statistic(&y, &spec).unwrap();
        spec.combine = Combine::SumMagnitude;
        let summed = test_statistic(&y, &spec).unwrap();
        assert!(summed <= mag + 1e-15);
        spec.combine = Combine::MagnitudeSum;
        spec.discard_prefix = 200;
        let tail = IqBuffer::new(y.samples()[200..].to_vec(), y.sample_rate_hz()).unwrap();
        let no_discard = TestStatisticSpec {
            discard_prefix: 0,
            ..spec.clone()
        };
        assert_eq!(
            test_statistic(&y, &spec).unwrap(),
            test_statistic(&tail, &no_discard).unwrap()
        );
        spec.discard_prefix = 1000;
        assert!(test_statistic(&y, &spec).is_err());
        assert_eq!(
            Combine::parse("sum-magnitude").unwrap(),
            Combine::SumMagnitude
        );
        assert!(Combine::parse("x").is_err());
    }

    #[test]
    fn order_statistic_threshold() {
        let stats: Vec<f64> = (1..=10_000).map(f64::from).collect();
        // 100th largest of 1..=10000
        assert_eq!(threshold_from_statistics(&stats, 0.01).unwrap(), 9901.0);
        // median-rank: 5000th largest
        assert_eq!(threshold_from_statistics(&stats, 0.5).unwrap(), 5001.0);
        assert!(
            threshold_from_statistics(&stats, 0.05).unwrap()
                <= threshold_from_statistics(&stats, 0.01).unwrap()
        );
        assert!(threshold_from_statistics(&[], 0.1).is_err());
        assert!(threshold_from_statistics(&stats, 1.0).is_err());
    }

    #[test]
    fn calibration_requires_enough_trials() {
        let f = |_: &mut TrialRng| Ok(1.0);
        assert!(calibrate_threshold(f, 0.01, 4999, 1, 0).is_err());
        assert!(calibrate_threshold(f, 0.01, 5000, 1, 0).is_ok());
        assert!(calibrate_threshold(f, 0.0, 5000, 1, 0).is_err());
        assert_eq!(min_calibration_trials(0.01), 5000);
    }

    #[test]
    fn calibration_of_uniform_statistic() {
        use rand::Rng;
        let th = calibrate_threshold(|rng| Ok(rng.random::<f64>()), 0.5, 2000, 9, 42).unwrap();
        assert!((th.lambda - 0.5).abs() < 0.05);
        assert_eq!(th.spec_hash, 42);
        assert_eq!(th.n_calibration_trials, 2000);
        let again = calibrate_threshold(|rng| Ok(rng.random::<f64>()), 0.5, 2000, 9, 42).unwrap();
        assert_eq!(th, again);
    }

    #[test]
    fn decisions_are_strict_and_hash_bound() {
        assert!(!DetectorOutcome::new(1.0, 1.0).decision);
        assert!(DetectorOutcome::new(1.0 + 1e-12, 1.0).decision);

        let det = CycloDetector {
            pipeline: Pipeline::Direct,
            statistic: TestStatisticSpec::standard(&radio()),
            n_samples: 800,
            noise_var: 1.0,
        };
        let th = CalibratedThreshold {
            lambda: 0.5,
            pf_target: 0.01,
            n_calibration_trials: 10_000,
            spec_hash: det.spec_hash(),
            seed: 0,
        };
        let zero = IqBuffer::zeros(800, 102_400.0);
        let out = det.decide(&zero, &th).unwrap();
        assert!(!out.decision);
        assert_eq!(out.statistic, 0.0);
        // same detector, different length
        assert!(matches!(
            det.decide(&IqBuffer::zeros(1600, 102_400.0), &th),
            Err(Error::Config(_))
        ));
        let fresh = CycloDetector {
            pipeline: Pipeline::Fresh(FreshConfig::standard(&radio())),
            ..det.clone()
        };
        assert_ne!(fresh.spec_hash(), det.spec_hash());
        assert!(fresh.decide(&zero, &th).is_err());
    }

    #[test]
    fn fresh_pipeline_output_under_h0_has_positive_statistic() {
        let det = CycloDetector {
            pipeline: Pipeline::Fresh(FreshConfig::standard(&radio())),
            statistic: TestStatisticSpec::standard(&radio()),
            n_samples: 800,
            noise_var: 1.0,
        };
        for seed in 0..5 {
            assert!(det.statistic_of(noise(seed, 800)).unwrap() > 0.0);
        }
        assert!(det.statistic_of(noise(0, 801)).is_err());
    }
}

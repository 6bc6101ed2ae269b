//! MSE-convergence experiment: blind FRESH adaptation at a fixed SNR for a
//! grid of step sizes, averaged over independent runs.

use super::sweep::received_record;
use crate::fresh::{moving_average, run_blind, FreshConfig};
use crate::par;
use crate::rng::{fnv1a64, trial_rng};
use crate::sigmodel::RadioParams;
use crate::{Error, Result};
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct MseSpec {
    pub radio: RadioParams,
    /// Branch layout; its step size is replaced by each grid value.
    pub fresh: FreshConfig,
    pub mu_grid: Vec<f64>,
    pub snr_db: f64,
    pub n_iterations: usize,
    pub window: usize,
    /// Independent input realizations averaged per iteration.
    pub n_runs: usize,
    pub seed: u64,
}

impl MseSpec {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.mu_grid.is_empty() {
            return Err(Error::Config("empty step-size grid".into()));
        }
        if self.n_iterations == 0 || self.n_runs == 0 || self.window == 0 {
            return Err(Error::Config(
                "iterations, runs and window must be positive".into(),
            ));
        }
        for &mu in &self.mu_grid {
            self.fresh.clone().with_step_size(mu).validate()?;
        }
        Ok(())
    }
}

/// Ensemble-averaged squared error for one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub mu: f64,
    /// Mean of |ε(n)|² over runs, per iteration; only the prefix before the
    /// first divergence is meaningful.
    pub ensemble: Vec<f64>,
    /// First sample index at which any run diverged.
    pub diverged_at: Option<usize>,
}

impl MseCurve {
    /// Mean ensemble MSE over the last `k` iterations (`None` if diverged).
    pub fn steady_state(&self, k: usize) -> Option<f64> {
        if self.diverged_at.is_some() {
            return None;
        }
        let k = k.min(self.ensemble.len()).max(1);
        let tail = &self.ensemble[self.ensemble.len() - k..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub mu: f64,
    /// 1-based.
    pub iteration: usize,
    pub time_averaged_mse: f64,
    pub diverged: bool,
}

/// Runs every step size on the same input realizations.
pub fn run_mse_experiment(spec: &MseSpec) -> Result<(Vec<MseCurve>, Vec<MseRow>)> {
    spec.validate()?;
    let tag = fnv1a64(format!("mse|snr={:?}|n={}", spec.snr_db, spec.n_iterations).as_bytes());
    let mut curves = Vec::with_capacity(spec.mu_grid.len());
    let mut rows = Vec::with_capacity(spec.mu_grid.len() * spec.n_iterations);
    for &mu in &spec.mu_grid {
        let cfg = spec.fresh.clone().with_step_size(mu);
        let runs = par::try_map_indexed(spec.n_runs, |r| {
            let mut rng = trial_rng(spec.seed, tag, r as u64);
            let x = received_record(
                &spec.radio,
                spec.n_iterations,
                Some(spec.snr_db),
                spec.radio.noise_var,
                &mut rng,
            )?;
            match run_blind(&x, &cfg) {
                Ok(run) => Ok((run.trace.squared_error, None)),
                Err(Error::Divergence { sample_index }) => {
                    Ok((Vec::new(), Some(sample_index as usize)))
                }
                Err(e) => Err(e),
            }
        })?;
        let diverged_at = runs.iter().filter_map(|(_, d)| *d).min();
        let valid = diverged_at.unwrap_or(spec.n_iterations);
        let mut ensemble = vec![0.0; spec.n_iterations];
        for (se, _) in runs.iter().filter(|(_, d)| d.is_none()) {
            for (acc, v) in ensemble.iter_mut().zip(se) {
                *acc += v;
            }
        }
        let healthy = runs.iter().filter(|(_, d)| d.is_none()).count().max(1);
        for v in &mut ensemble {
            *v /= healthy as f64;
        }
        let smoothed = moving_average(&ensemble[..valid], spec.window);
        for i in 0..spec.n_iterations {
            rows.push(MseRow {
                mu,
                iteration: i + 1,
                time_averaged_mse: smoothed.get(i).copied().unwrap_or(f64::NAN),
                diverged: i >= valid,
            });
        }
        curves.push(MseCurve {
            mu,
            ensemble,
            diverged_at,
        });
    }
    Ok((curves, rows))
}

/// `mu,iteration,time_averaged_mse,diverged`.
pub fn write_mse_csv<W: Write>(rows: &[MseRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "mu,iteration,time_averaged_mse,diverged")?;
    for r in rows {
        writeln!(
            out,
            "{:?},{},{},{}",
            r.mu,
            r.iteration,
            if r.time_averaged_mse.is_nan() {
                "nan".to_string()
            } else {
                super::fmt_sig6(r.time_averaged_mse)
            },
            u8::from(r.diverged)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mu_grid: Vec<f64>) -> MseSpec {
        let radio = RadioParams::default();
        MseSpec {
            radio,
            fresh: FreshConfig::standard(&radio).with_taps(16),
            mu_grid,
            snr_db: 0.0,
            n_iterations: 3000,
            window: 200,
            n_runs: 3,
            seed: 4,
        }
    }

    #[test]
    fn row_count_and_zero_step() {
        let (curves, rows) = run_mse_experiment(&spec(vec![0.0, 5e-5])).unwrap();
        assert_eq!(rows.len(), 2 * 3000);
        assert_eq!(curves.len(), 2);
        // μ = 0: output stays 0, error is the input itself (power 2 at 0 dB)
        let flat: Vec<f64> = rows
            .iter()
            .filter(|r| r.mu == 0.0)
            .map(|r| r.time_averaged_mse)
            .collect();
        let tail = &flat[1000..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 2.0).abs() < 0.15, "{mean}");
        assert!(rows.iter().all(|r| !r.diverged));
        assert_eq!(rows[0].iteration, 1);
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let (curves, rows) = run_mse_experiment(&spec(vec![50.0])).unwrap();
        assert!(curves[0].diverged_at.is_some());
        assert_eq!(rows.len(), 3000);
        assert!(rows.last().unwrap().diverged);
        assert!(curves[0].steady_state(100).is_none());
        let mut buf = Vec::new();
        write_mse_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().ends_with(",nan,1"));
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(run_mse_experiment(&spec(vec![])).is_err());
    }
}

//! Flat key-value experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! methods = cyclo-fresh, energy-uncertain
//! n_samples = 800, 1600, 3200
//! snr_grid_db = 0:-20:-1        # start:stop:step, inclusive
//! n_trials = 1000
//! seed = 1
//! ```
//!
//! Every key of [`ExperimentConfig::KEYS`] may appear at most once per
//! source; later sources (CLI overrides) replace earlier ones.

use super::sweep::ExperimentSpec;
use super::{Method, MseSpec};
use crate::detector::{Combine, TestStatisticSpec};
use crate::energy::WorstCaseConvention;
use crate::fresh::{FreshConfig, MseTrace};
use crate::sigmodel::RadioParams;
use crate::{Error, Result};

/// How energy-detector thresholds are obtained in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyThreshold {
    /// Upper order statistic of simulated H0 energies.
    #[default]
    Empirical,
    /// Inverted Gaussian closed form (`2Nσ⁴` variance convention).
    ClosedForm,
}

impl EnergyThreshold {
    pub fn name(self) -> &'static str {
        match self {
            EnergyThreshold::Empirical => "empirical",
            EnergyThreshold::ClosedForm => "closed-form",
        }
    }
}

fn convention_name(c: WorstCaseConvention) -> &'static str {
    match c {
        WorstCaseConvention::LowSetsThreshold => "low-sets-threshold",
        WorstCaseConvention::HighSetsThreshold => "high-sets-threshold",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim_start_matches("paper-") {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (expected fig2|fig3|fig4|fig5)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub radio: RadioParams,
    pub methods: Vec<Method>,
    pub n_samples: Vec<usize>,
    pub snr_grid_db: Vec<f64>,
    pub pf_target: f64,
    pub n_trials: usize,
    pub n_h0_trials: usize,
    pub n_calibration_trials: usize,
    pub uncertainty_db: f64,
    pub worst_case: WorstCaseConvention,
    pub energy_threshold: EnergyThreshold,
    pub step_size: f64,
    pub n_taps: usize,
    pub lag: usize,
    pub combine: Combine,
    pub discard_prefix: usize,
    pub seed: u64,
    pub mu_grid: Vec<f64>,
    pub mse_iterations: usize,
    pub mse_window: usize,
    pub mse_runs: usize,
    pub mse_snr_db: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            radio: RadioParams::default(),
            methods: Method::ALL.to_vec(),
            n_samples: vec![800, 1600, 3200],
            snr_grid_db: (0..=20).map(|i| -f64::from(i)).collect(),
            pf_target: 0.01,
            n_trials: 1000,
            n_h0_trials: 10_000,
            n_calibration_trials: 10_000,
            uncertainty_db: 1.0,
            worst_case: WorstCaseConvention::HighSetsThreshold,
            energy_threshold: EnergyThreshold::Empirical,
            step_size: FreshConfig::DEFAULT_STEP_SIZE,
            n_taps: FreshConfig::DEFAULT_TAPS,
            lag: 0,
            combine: Combine::MagnitudeSum,
            discard_prefix: 0,
            seed: 1,
            mu_grid: vec![5e-6, 5e-5, 5e-4],
            mse_iterations: 20_000,
            mse_window: MseTrace::DEFAULT_WINDOW,
            mse_runs: 20,
            mse_snr_db: 0.0,
        }
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

/// `a, b, c` or `start:stop:step` (inclusive of `stop` within 1e−9).
fn parse_grid(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.contains(':') {
        let parts: Vec<f64> = v
            .split(':')
            .map(|p| num::<f64>(key, p))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(Error::Config(format!(
                "{key}: range must be start:stop:step"
            )));
        };
        if step == 0.0 || (stop - start) * step < 0.0 {
            return Err(Error::Config(format!(
                "{key}: step does not move from start to stop"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + step * i as f64).collect());
    }
    list(v, |s| num(key, s))
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 26] = [
        "carrier_hz",
        "baud_hz",
        "sample_rate_hz",
        "noise_var",
        "methods",
        "n_samples",
        "snr_grid_db",
        "pf_target",
        "n_trials",
        "n_h0_trials",
        "n_calibration_trials",
        "uncertainty_db",
        "worst_case",
        "energy_threshold",
        "step_size",
        "n_taps",
        "lag",
        "combine",
        "discard_prefix",
        "seed",
        "mu_grid",
        "mse_iterations",
        "mse_window",
        "mse_runs",
        "mse_snr_db",
        "preset",
    ];

    pub fn preset(p: Preset) -> Self {
        let base = Self::default();
        match p {
            Preset::Fig2 => base,
            Preset::Fig3 => Self {
                n_samples: vec![800],
                ..base
            },
            Preset::Fig4 => Self {
                n_samples: vec![1600],
                ..base
            },
            Preset::Fig5 => Self {
                n_samples: vec![3200],
                ..base
            },
        }
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "carrier_hz" => self.radio.carrier_hz = num(key, v)?,
            "baud_hz" => self.radio.baud_hz = num(key, v)?,
            "sample_rate_hz" => self.radio.sample_rate_hz = num(key, v)?,
            "noise_var" => self.radio.noise_var = num(key, v)?,
            "methods" => {
                self.methods = if v == "all" {
                    Method::ALL.to_vec()
                } else {
                    list(v, Method::parse)?
                }
            }
            "n_samples" => self.n_samples = list(v, |s| num(key, s))?,
            "snr_grid_db" => self.snr_grid_db = parse_grid(key, v)?,
            "pf_target" => self.pf_target = num(key, v)?,
            "n_trials" => self.n_trials = num(key, v)?,
            "n_h0_trials" => self.n_h0_trials = num(key, v)?,
            "n_calibration_trials" => self.n_calibration_trials = num(key, v)?,
            "uncertainty_db" => self.uncertainty_db = num(key, v)?,
            "worst_case" => {
                self.worst_case = match v {
                    "low-sets-threshold" => WorstCaseConvention::LowSetsThreshold,
                    "high-sets-threshold" | "snr-wall" => WorstCaseConvention::HighSetsThreshold,
                    _ => {
                        return Err(Error::Config(format!(
                            "worst_case: unknown convention {v:?}"
                        )))
                    }
                }
            }
            "energy_threshold" => {
                self.energy_threshold = match v {
                    "empirical" => EnergyThreshold::Empirical,
                    "closed-form" => EnergyThreshold::ClosedForm,
                    _ => {
                        return Err(Error::Config(format!(
                            "energy_threshold: unknown mode {v:?}"
                        )))
                    }
                }
            }
            "step_size" | "mu" => self.step_size = num(key, v)?,
            "n_taps" => self.n_taps = num(key, v)?,
            "lag" => self.lag = num(key, v)?,
            "combine" => self.combine = Combine::parse(v)?,
            "discard_prefix" => self.discard_prefix = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "mu_grid" => self.mu_grid = list(v, |s| num(key, s))?,
            "mse_iterations" => self.mse_iterations = num(key, v)?,
            "mse_window" => self.mse_window = num(key, v)?,
            "mse_runs" => self.mse_runs = num(key, v)?,
            "mse_snr_db" => self.mse_snr_db = num(key, v)?,
            "preset" => {
                let seed = self.seed;
                *self = Self::preset(Preset::parse(v)?);
                self.seed = seed;
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a `key = value` text on top of `self`. A `preset` line, if
    /// present, is applied before every other key regardless of position.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            let k = k.trim().to_string();
            if !seen.insert(k.clone()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key {k:?}"),
                });
            }
            entries.push((i + 1, k, v.trim().to_string()));
        }
        entries.sort_by_key(|(_, k, _)| k != "preset");
        for (line, k, v) in entries {
            self.set(&k, &v).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical text form; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let lines = [
            ("carrier_hz", format!("{:?}", self.radio.carrier_hz)),
            ("baud_hz", format!("{:?}", self.radio.baud_hz)),
            ("sample_rate_hz", format!("{:?}", self.radio.sample_rate_hz)),
            ("noise_var", format!("{:?}", self.radio.noise_var)),
            ("methods", methods.join(", ")),
            ("n_samples", fmt_list(&self.n_samples)),
            ("snr_grid_db", fmt_list(&self.snr_grid_db)),
            ("pf_target", format!("{:?}", self.pf_target)),
            ("n_trials", self.n_trials.to_string()),
            ("n_h0_trials", self.n_h0_trials.to_string()),
            (
                "n_calibration_trials",
                self.n_calibration_trials.to_string(),
            ),
            ("uncertainty_db", format!("{:?}", self.uncertainty_db)),
            ("worst_case", convention_name(self.worst_case).to_string()),
            ("energy_threshold", self.energy_threshold.name().to_string()),
            ("step_size", format!("{:?}", self.step_size)),
            ("n_taps", self.n_taps.to_string()),
            ("lag", self.lag.to_string()),
            ("combine", self.combine.name().to_string()),
            ("discard_prefix", self.discard_prefix.to_string()),
            ("seed", self.seed.to_string()),
            ("mu_grid", fmt_list(&self.mu_grid)),
            ("mse_iterations", self.mse_iterations.to_string()),
            ("mse_window", self.mse_window.to_string()),
            ("mse_runs", self.mse_runs.to_string()),
            ("mse_snr_db", format!("{:?}", self.mse_snr_db)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn fresh_config(&self) -> FreshConfig {
        FreshConfig::standard(&self.radio)
            .with_taps(self.n_taps)
            .with_step_size(self.step_size)
    }

    pub fn statistic(&self) -> TestStatisticSpec {
        TestStatisticSpec {
            lag: self.lag,
            combine: self.combine,
            discard_prefix: self.discard_prefix,
            ..TestStatisticSpec::standard(&self.radio)
        }
    }

    /// One spec per `(method, n_samples)`, methods outermost.
    pub fn experiment_specs(&self) -> Result<Vec<ExperimentSpec>> {
        if self.methods.is_empty() || self.n_samples.is_empty() {
            return Err(Error::Config(
                "methods and n_samples must be non-empty".into(),
            ));
        }
        let mut out = Vec::new();
        for &method in &self.methods {
            for &n_samples in &self.n_samples {
                let spec = ExperimentSpec {
                    radio: self.radio,
                    method,
                    n_samples,
                    snr_grid_db: self.snr_grid_db.clone(),
                    pf_target: self.pf_target,
                    n_trials: self.n_trials,
                    n_h0_trials: self.n_h0_trials,
                    n_calibration_trials: self.n_calibration_trials,
                    uncertainty_db: self.uncertainty_db,
                    worst_case: self.worst_case,
                    energy_threshold: self.energy_threshold,
                    fresh: self.fresh_config(),
                    statistic: self.statistic(),
                    seed: self.seed,
                };
                spec.validate()?;
                out.push(spec);
            }
        }
        Ok(out)
    }

    pub fn mse_spec(&self) -> MseSpec {
        MseSpec {
            radio: self.radio,
            fresh: self.fresh_config(),
            mu_grid: self.mu_grid.clone(),
            snr_db: self.mse_snr_db,
            n_iterations: self.mse_iterations,
            window: self.mse_window,
            n_runs: self.mse_runs,
            seed: self.seed,
        }
    }
}

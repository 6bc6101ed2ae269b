//! `fresh-sense` command-line experiment runner.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fresh_sense::fresh::{moving_average, run_blind, run_blind_from, FreshState};
use fresh_sense::harness::{
    caf_rows, emit_csv, received_record, run_detection_sweep, run_mse_experiment, write_caf_csv,
    write_mse_csv, CalibrationStore, ExperimentConfig, Method, MseRow, Preset,
};
use fresh_sense::rng::trial_rng;
use fresh_sense::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fresh-sense",
    version,
    about = "Cyclostationary spectrum sensing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig2 (MSE) | fig3 (N = 800) | fig4 (N = 1600) | fig5 (N = 3200)
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump a CAF profile of one synthetic received record.
    Caf {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value_t = 32_000)]
        n_samples: usize,
        /// Omit the BPSK signal (noise only).
        #[arg(long)]
        noise_only: bool,
        /// Grid start; the default puts 2f_c and 2f_c ± baud on grid points.
        #[arg(long, default_value_t = 54_940.0)]
        alpha_start: f64,
        #[arg(long, default_value_t = 68_040.0)]
        alpha_stop: f64,
        #[arg(long, default_value_t = 100.0)]
        alpha_step: f64,
        /// Half a symbol; at lag 0 rectangular BPSK only shows the 2f_c line.
        #[arg(long, default_value_t = 16)]
        lag: usize,
        /// Plain CAF instead of the conjugate CAF.
        #[arg(long)]
        non_conjugate: bool,
    },
    /// Time-averaged MSE of blind FRESH adaptation for a grid of step sizes.
    Mse {
        #[command(flatten)]
        common: Common,
        /// Also adapt once at `step_size` and write the final filter state here.
        #[arg(long)]
        save_state: Option<PathBuf>,
        /// Continue adapting from a saved state on a fresh record instead of
        /// running the grid.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Calibrate CFAR thresholds and store them.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "calibration.csv")]
        calibration: PathBuf,
        /// Recalibrate even when a matching threshold is stored.
        #[arg(long)]
        force: bool,
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long = "n-samples", value_delimiter = ',')]
        n_samples: Vec<usize>,
    },
    /// Detection-probability sweep over SNR.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Threshold file to reuse and extend.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long = "n-samples", value_delimiter = ',')]
        n_samples: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        uncertainty_db: Option<f64>,
        /// SNR grid, `a,b,c` or `start:stop:step`.
        #[arg(long, allow_hyphen_values = true)]
        snr_grid: Option<String>,
    },
    /// Summarize a saved filter state.
    State { path: PathBuf },
}

fn load_config(common: &Common) -> fresh_sense::Result<ExperimentConfig> {
    let mut cfg = match &common.preset {
        Some(p) => ExperimentConfig::preset(Preset::parse(p)?),
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        cfg.apply_text(&text)?;
        // an explicit --preset wins over a preset line in the file
        if let Some(p) = &common.preset {
            cfg.set("preset", p)?;
            cfg.apply_text(&strip_preset(&text))?;
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn strip_preset(text: &str) -> String {
    text.lines()
        .filter(|l| {
            l.split('#')
                .next()
                .unwrap_or("")
                .split('=')
                .next()
                .map(str::trim)
                != Some("preset")
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

fn apply_selection(
    cfg: &mut ExperimentConfig,
    methods: &[String],
    n_samples: &[usize],
) -> fresh_sense::Result<()> {
    if !methods.is_empty() {
        cfg.methods = methods
            .iter()
            .map(|m| {
                if m == "all" {
                    Ok(Method::ALL.to_vec())
                } else {
                    Method::parse(m).map(|m| vec![m])
                }
            })
            .collect::<fresh_sense::Result<Vec<_>>>()?
            .concat();
    }
    if !n_samples.is_empty() {
        cfg.n_samples = n_samples.to_vec();
    }
    Ok(())
}

fn write_output(
    out: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> fresh_sense::Result<()> {
    let mut buf = Vec::new();
    let label = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    f(&mut buf).map_err(|e| Error::Io {
        path: label.clone(),
        source: e,
    })?;
    match out {
        Some(p) => std::fs::write(p, buf),
        None => std::io::stdout().write_all(&buf),
    }
    .map_err(|e| Error::Io {
        path: label,
        source: e,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Caf {
            common,
            snr_db,
            n_samples,
            noise_only,
            alpha_start,
            alpha_stop,
            alpha_step,
            lag,
            non_conjugate,
        } => {
            let cfg = load_config(&common)?;
            if alpha_step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
                || alpha_stop < alpha_start
            {
                return Err(Error::Config(
                    "alpha grid must have positive step and stop ≥ start".into(),
                )
                .into());
            }
            let count = ((alpha_stop - alpha_start) / alpha_step + 1e-9).floor() as usize + 1;
            let alphas: Vec<f64> = (0..count)
                .map(|i| alpha_start + alpha_step * i as f64)
                .collect();
            let mut rng = trial_rng(cfg.seed, 0, 0);
            let signal = (!noise_only).then_some(snr_db);
            let x = received_record(&cfg.radio, n_samples, signal, cfg.radio.noise_var, &mut rng)?;
            let rows = caf_rows(&x, &alphas, lag, !non_conjugate)?;
            write_output(common.out.as_deref(), |w| write_caf_csv(&rows, w))?;
        }
        Command::Mse {
            common,
            save_state,
            resume,
        } => {
            let cfg = load_config(&common)?;
            if let Some(path) = resume {
                let file = std::fs::File::open(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let (fcfg, state) = FreshState::read_snapshot(std::io::BufReader::new(file))?;
                let mut rng = trial_rng(cfg.seed, state.sample_index(), 0);
                let x = received_record(
                    &cfg.radio,
                    cfg.mse_iterations,
                    Some(cfg.mse_snr_db),
                    cfg.radio.noise_var,
                    &mut rng,
                )?;
                let start = state.sample_index() as usize;
                let run = run_blind_from(&x, &fcfg, state)?;
                let smoothed = moving_average(&run.trace.squared_error, cfg.mse_window);
                let rows: Vec<MseRow> = smoothed
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| MseRow {
                        mu: fcfg.step_size,
                        iteration: start + i + 1,
                        time_averaged_mse: m,
                        diverged: false,
                    })
                    .collect();
                write_output(common.out.as_deref(), |w| write_mse_csv(&rows, w))?;
                if let Some(p) = save_state {
                    write_state(&p, &fcfg, &run.state)?;
                }
                return Ok(());
            }
            let spec = cfg.mse_spec();
            let (curves, rows) = run_mse_experiment(&spec)?;
            for c in &curves {
                match c.steady_state(1000) {
                    Some(m) => eprintln!("mu={:e} steady-state mse (last 1000) = {m:.5}", c.mu),
                    None => eprintln!(
                        "mu={:e} diverged at sample {}",
                        c.mu,
                        c.diverged_at.unwrap_or(0)
                    ),
                }
            }
            write_output(common.out.as_deref(), |w| write_mse_csv(&rows, w))?;
            if let Some(p) = save_state {
                let mut rng = trial_rng(cfg.seed, 0, 0);
                let x = received_record(
                    &cfg.radio,
                    cfg.mse_iterations,
                    Some(cfg.mse_snr_db),
                    cfg.radio.noise_var,
                    &mut rng,
                )?;
                let fcfg = cfg.fresh_config();
                let run = run_blind(&x, &fcfg)?;
                write_state(&p, &fcfg, &run.state)?;
            }
        }
        Command::Calibrate {
            common,
            calibration,
            force,
            methods,
            n_samples,
        } => {
            let mut cfg = load_config(&common)?;
            apply_selection(&mut cfg, &methods, &n_samples)?;
            let mut store = CalibrationStore::load(&calibration)?;
            for spec in cfg.experiment_specs()? {
                let t = if force {
                    let t = spec.threshold(&mut CalibrationStore::new())?;
                    store.insert(t);
                    t
                } else {
                    spec.threshold(&mut store)?
                };
                eprintln!(
                    "{} n={} pf={} lambda={:.6e} trials={} hash={:016x}",
                    spec.method,
                    spec.n_samples,
                    t.pf_target,
                    t.lambda,
                    t.n_calibration_trials,
                    t.spec_hash
                );
            }
            store.save(&calibration)?;
            if let Some(out) = &common.out {
                store.save(out)?;
            }
        }
        Command::Sweep {
            common,
            calibration,
            methods,
            n_samples,
            trials,
            uncertainty_db,
            snr_grid,
        } => {
            let mut cfg = load_config(&common)?;
            apply_selection(&mut cfg, &methods, &n_samples)?;
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            if let Some(a) = uncertainty_db {
                cfg.uncertainty_db = a;
            }
            if let Some(g) = snr_grid {
                cfg.set("snr_grid_db", &g)?;
            }
            let mut store = match &calibration {
                Some(p) => CalibrationStore::load(p)?,
                None => CalibrationStore::new(),
            };
            let mut records = Vec::new();
            for spec in cfg.experiment_specs()? {
                eprintln!(
                    "sweep {} n={} ({} SNR points)",
                    spec.method,
                    spec.n_samples,
                    spec.snr_grid_db.len()
                );
                let outcome = run_detection_sweep(&spec, &mut store)?;
                if outcome.diverged_trials > 0 {
                    eprintln!("  {} diverged trials", outcome.diverged_trials);
                }
                records.extend(outcome.records);
            }
            if let Some(p) = &calibration {
                store.save(p)?;
            }
            match &common.out {
                Some(p) => emit_csv(&records, p)?,
                None => fresh_sense::harness::write_records(&records, std::io::stdout().lock())
                    .context("writing CSV to stdout")?,
            }
        }
        Command::State { path } => {
            let file = std::fs::File::open(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let (fcfg, state) = FreshState::read_snapshot(std::io::BufReader::new(file))?;
            println!("sample_index {}", state.sample_index());
            println!("step_size {:e}", fcfg.step_size);
            println!("config_hash {:016x}", state.config_hash());
            for (b, spec) in fcfg.branches.iter().enumerate() {
                let norm: f64 = state
                    .branch_weights(&fcfg, b)
                    .iter()
                    .map(|w| w.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                println!(
                    "branch {b} shift {} Hz {} taps {} |w| {norm:.6e}",
                    spec.shift_hz,
                    if spec.conjugate {
                        "conjugate"
                    } else {
                        "linear"
                    },
                    spec.n_taps
                );
            }
        }
    }
    Ok(())
}

fn write_state(
    path: &Path,
    cfg: &fresh_sense::fresh::FreshConfig,
    state: &FreshState,
) -> fresh_sense::Result<()> {
    let mut buf = Vec::new();
    state.write_snapshot(cfg, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_) | Error::InvalidParameter(_) | Error::Parse { .. } | Error::Shape(_),
        ) => EXIT_CONFIG,
        Some(Error::DivergenceDominated { .. } | Error::Divergence { .. }) => EXIT_DIVERGED,
        Some(Error::Io { .. }) => EXIT_IO,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

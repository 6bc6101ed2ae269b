//! LCL-FRESH filter with blind LMS adaptation.
//!
//! Each branch frequency-shifts the input (optionally conjugated) and runs it
//! through its own FIR filter; the branch outputs are summed:
//!
//! ```text
//! u_b(n) = g_b(x(n))·exp(j2π·shift_b·n/f_s)      g_b = identity or conj
//! y(n)   = Σ_b Σ_t w_b[t]·u_b(n − t)
//! ε(n)   = d(n) − y(n)
//! w_b[t] ← w_b[t] + μ·ε(n)·u_b*(n − t)
//! ```
//!
//! The update is the stochastic gradient step for the output form above
//! (`∂|ε|²/∂w* = −ε·u*`). In blind mode the desired signal is the received
//! signal itself, and since no branch has a zero shift the filter cannot
//! simply pass its input through: it can only reproduce the part of `x`
//! that is spectrally coherent with its own frequency-shifted copies.
//!
//! Weights are stored as one concatenated vector in branch order.

use crate::phase::{phasor, Rotator};
use crate::rng::fnv1a64;
use crate::sigmodel::{IqBuffer, RadioParams};
use crate::{Error, Result};
use num_complex::Complex64;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSpec {
    /// Frequency multiplying `n·T_s` in the shifter; taken modulo f_s.
    pub shift_hz: f64,
    /// Conjugate-linear branch (filters `x*` instead of `x`).
    pub conjugate: bool,
    pub n_taps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreshConfig {
    pub branches: Vec<BranchSpec>,
    pub sample_rate_hz: f64,
    pub step_size: f64,
}

impl FreshConfig {
    pub const DEFAULT_TAPS: usize = 64;
    pub const DEFAULT_STEP_SIZE: f64 = 5e-5;

    /// Six branches: `±baud` linear, `±2f_c` and `±(2f_c + baud)` conjugate,
    /// 64 taps each, μ = 5e−5.
    pub fn standard(radio: &RadioParams) -> Self {
        let a1 = radio.baud_hz;
        let a2 = 2.0 * radio.carrier_hz;
        let a3 = a2 + radio.baud_hz;
        let branch = |shift_hz, conjugate| BranchSpec {
            shift_hz,
            conjugate,
            n_taps: Self::DEFAULT_TAPS,
        };
        Self {
            branches: vec![
                branch(a1, false),
                branch(-a1, false),
                branch(a2, true),
                branch(-a2, true),
                branch(a3, true),
                branch(-a3, true),
            ],
            sample_rate_hz: radio.sample_rate_hz,
            step_size: Self::DEFAULT_STEP_SIZE,
        }
    }

    pub fn with_step_size(mut self, mu: f64) -> Self {
        self.step_size = mu;
        self
    }

    pub fn with_taps(mut self, n_taps: usize) -> Self {
        for b in &mut self.branches {
            b.n_taps = n_taps;
        }
        self
    }

    /// μ = 0 is accepted so a frozen-at-zero run can be expressed.
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Config(
                "FRESH filter needs at least one branch".into(),
            ));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step size must be non-negative, got {}",
                self.step_size
            )));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.n_taps == 0 {
                return Err(Error::Config(format!("branch {i} has zero taps")));
            }
            if !b.shift_hz.is_finite() {
                return Err(Error::Config(format!("branch {i} shift is not finite")));
            }
        }
        Ok(())
    }

    pub fn total_taps(&self) -> usize {
        self.branches.iter().map(|b| b.n_taps).sum()
    }

    /// Canonical text form; the basis of [`FreshConfig::fingerprint`].
    pub fn describe(&self) -> String {
        let mut s = format!("fs={:?};mu={:?}", self.sample_rate_hz, self.step_size);
        for b in &self.branches {
            s.push_str(&format!(
                ";{}{:?}x{}",
                if b.conjugate { "c" } else { "l" },
                b.shift_hz,
                b.n_taps
            ));
        }
        s
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.describe().as_bytes())
    }
}

/// `g(x_n)·exp(j2π·shift·n/f_s)` for one branch.
pub fn branch_input(x_n: Complex64, spec: &BranchSpec, n: u64, sample_rate_hz: f64) -> Complex64 {
    let g = if spec.conjugate { x_n.conj() } else { x_n };
    g * phasor(spec.shift_hz, sample_rate_hz, n)
}

/// Live filter state: weights, per-branch delay lines and the sample index
/// that drives the shifter phases.
///
/// Storage is split into real and imaginary planes so the inner products
/// vectorise.
#[derive(Debug, Clone)]
pub struct FreshState {
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    // Per branch a 2·taps mirrored ring so the newest-first window is one
    // contiguous slice.
    l_re: Vec<f64>,
    l_im: Vec<f64>,
    heads: Vec<usize>,
    offsets: Vec<usize>,
    rotators: Vec<Rotator>,
    sample_index: u64,
    config: FreshConfig,
    config_hash: u64,
}

const LANES: usize = 8;

/// `Σ w·u` over split-plane slices of equal length.
#[inline]
fn cdot(wr: &[f64], wi: &[f64], ur: &[f64], ui: &[f64]) -> Complex64 {
    let mut re = [0.0; LANES];
    let mut im = [0.0; LANES];
    let body = wr.len() / LANES * LANES;
    for (((a, b), c), d) in wr[..body]
        .chunks_exact(LANES)
        .zip(wi[..body].chunks_exact(LANES))
        .zip(ur[..body].chunks_exact(LANES))
        .zip(ui[..body].chunks_exact(LANES))
    {
        for l in 0..LANES {
            re[l] += a[l] * c[l] - b[l] * d[l];
            im[l] += a[l] * d[l] + b[l] * c[l];
        }
    }
    let mut acc = Complex64::new(re.iter().sum(), im.iter().sum());
    for i in body..wr.len() {
        acc += Complex64::new(wr[i], wi[i]) * Complex64::new(ur[i], ui[i]);
    }
    acc
}

impl FreshState {
    /// Zero weights, empty delay lines, index 0.
    pub fn new(config: &FreshConfig) -> Result<Self> {
        Self::starting_at(config, 0)
    }

    fn starting_at(config: &FreshConfig, sample_index: u64) -> Result<Self> {
        config.validate()?;
        let mut offsets = Vec::with_capacity(config.branches.len());
        let mut acc = 0;
        for b in &config.branches {
            offsets.push(acc);
            acc += b.n_taps;
        }
        Ok(Self {
            w_re: vec![0.0; acc],
            w_im: vec![0.0; acc],
            l_re: vec![0.0; 2 * acc],
            l_im: vec![0.0; 2 * acc],
            heads: vec![0; config.branches.len()],
            offsets,
            rotators: config
                .branches
                .iter()
                .map(|b| Rotator::new(b.shift_hz, config.sample_rate_hz, sample_index))
                .collect(),
            sample_index,
            config: config.clone(),
            config_hash: config.fingerprint(),
        })
    }

    pub fn weights(&self) -> Vec<Complex64> {
        zip_planes(&self.w_re, &self.w_im)
    }

    /// Replace the weight vector (e.g. to freeze a trained filter).
    pub fn set_weights(&mut self, weights: &[Complex64]) -> Result<()> {
        if weights.len() != self.w_re.len() {
            return Err(Error::Shape(format!(
                "expected {} weights, got {}",
                self.w_re.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        for (i, w) in weights.iter().enumerate() {
            self.w_re[i] = w.re;
            self.w_im[i] = w.im;
        }
        Ok(())
    }

    fn weights_finite(&self) -> bool {
        self.w_re.iter().chain(&self.w_im).all(|v| v.is_finite())
    }

    fn branch_range(&self, branch: usize) -> std::ops::Range<usize> {
        let off = self.offsets[branch];
        off..off + self.config.branches[branch].n_taps
    }

    fn line_range(&self, branch: usize) -> std::ops::Range<usize> {
        let start = 2 * self.offsets[branch] + self.heads[branch];
        start..start + self.config.branches[branch].n_taps
    }

    pub fn branch_weights(&self, config: &FreshConfig, branch: usize) -> Vec<Complex64> {
        debug_assert_eq!(config, &self.config);
        let r = self.branch_range(branch);
        zip_planes(&self.w_re[r.clone()], &self.w_im[r])
    }

    /// Newest-first delay line of one branch.
    pub fn delay_line(&self, config: &FreshConfig, branch: usize) -> Vec<Complex64> {
        debug_assert_eq!(config, &self.config);
        let r = self.line_range(branch);
        zip_planes(&self.l_re[r.clone()], &self.l_im[r])
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    fn check_config(&self, config: &FreshConfig) -> Result<()> {
        if *config != self.config {
            return Err(Error::Config(
                "filter state was built for a different FRESH configuration".into(),
            ));
        }
        Ok(())
    }

    fn push_input(&mut self, x_n: Complex64) {
        for (b, spec) in self.config.branches.iter().enumerate() {
            let taps = spec.n_taps;
            let base = 2 * self.offsets[b];
            let g = if spec.conjugate { x_n.conj() } else { x_n };
            let v = g * self.rotators[b].next_phasor();
            let head = if self.heads[b] == 0 {
                taps - 1
            } else {
                self.heads[b] - 1
            };
            self.l_re[base + head] = v.re;
            self.l_re[base + head + taps] = v.re;
            self.l_im[base + head] = v.im;
            self.l_im[base + head + taps] = v.im;
            self.heads[b] = head;
        }
        self.sample_index += 1;
    }

    fn output(&self) -> Complex64 {
        let mut y = Complex64::new(0.0, 0.0);
        for b in 0..self.config.branches.len() {
            let w = self.branch_range(b);
            let u = self.line_range(b);
            y += cdot(
                &self.w_re[w.clone()],
                &self.w_im[w],
                &self.l_re[u.clone()],
                &self.l_im[u],
            );
        }
        y
    }

    /// `w ← w + μ·err·u*`.
    fn update(&mut self, err: Complex64) {
        let g = err * self.config.step_size;
        for b in 0..self.config.branches.len() {
            let w = self.branch_range(b);
            let u = self.line_range(b);
            let (ur, ui) = (&self.l_re[u.clone()], &self.l_im[u]);
            for (((wr, wi), &cr), &ci) in self.w_re[w.clone()]
                .iter_mut()
                .zip(&mut self.w_im[w])
                .zip(ur)
                .zip(ui)
            {
                *wr += g.re * cr + g.im * ci;
                *wi += g.im * cr - g.re * ci;
            }
        }
    }

    /// Push, filter and (optionally) adapt without re-validating the config.
    #[inline]
    fn step(&mut self, x_n: Complex64, d_n: Option<Complex64>) -> Result<(Complex64, Complex64)> {
        self.push_input(x_n);
        let y = self.output();
        let err = d_n.map_or(Complex64::new(0.0, 0.0), |d| d - y);
        if !(y.is_finite() && err.is_finite()) {
            return Err(Error::Divergence {
                sample_index: self.sample_index - 1,
            });
        }
        if d_n.is_some() {
            self.update(err);
        }
        Ok((y, err))
    }

    pub fn write_snapshot<W: Write>(&self, config: &FreshConfig, mut out: W) -> Result<()> {
        self.check_config(config)?;
        let io = |e| Error::io("<snapshot>", e);
        writeln!(out, "fresh-state v1").map_err(io)?;
        writeln!(out, "config_hash {:016x}", self.config_hash).map_err(io)?;
        writeln!(out, "sample_index {}", self.sample_index).map_err(io)?;
        writeln!(out, "step_size {:?}", config.step_size).map_err(io)?;
        writeln!(out, "sample_rate_hz {:?}", config.sample_rate_hz).map_err(io)?;
        writeln!(out, "branches {}", config.branches.len()).map_err(io)?;
        for b in &config.branches {
            writeln!(
                out,
                "branch {:?} {} {}",
                b.shift_hz,
                u8::from(b.conjugate),
                b.n_taps
            )
            .map_err(io)?;
        }
        writeln!(out, "weights {}", self.w_re.len()).map_err(io)?;
        for w in &self.weights() {
            writeln!(out, "{:?} {:?}", w.re, w.im).map_err(io)?;
        }
        writeln!(out, "delay {}", self.w_re.len()).map_err(io)?;
        for b in 0..config.branches.len() {
            for u in self.delay_line(config, b) {
                writeln!(out, "{:?} {:?}", u.re, u.im).map_err(io)?;
            }
        }
        Ok(())
    }

    /// Parse a snapshot written by [`FreshState::write_snapshot`]. Returns the
    /// embedded configuration together with the restored state.
    pub fn read_snapshot<R: BufRead>(input: R) -> Result<(FreshConfig, FreshState)> {
        let mut lines = input.lines().enumerate().map(|(i, l)| {
            l.map(|s| (i + 1, s))
                .map_err(|e| Error::io("<snapshot>", e))
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines.next().transpose()?.ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unexpected end of snapshot, expected {what}"),
            })
        };
        let (line, header) = next("header")?;
        if header.trim() != "fresh-state v1" {
            return Err(Error::Parse {
                line,
                msg: format!("unknown snapshot header {header:?}"),
            });
        }
        let hash = u64::from_str_radix(&keyed(&next("config_hash")?, "config_hash")?, 16).map_err(
            |e| Error::Parse {
                line: 2,
                msg: e.to_string(),
            },
        )?;
        let sample_index: u64 = parse_at(&next("sample_index")?, "sample_index")?;
        let step_size: f64 = parse_at(&next("step_size")?, "step_size")?;
        let sample_rate_hz: f64 = parse_at(&next("sample_rate_hz")?, "sample_rate_hz")?;
        let n_branches: usize = parse_at(&next("branches")?, "branches")?;
        let mut branches = Vec::with_capacity(n_branches);
        for _ in 0..n_branches {
            let (line, text) = next("branch")?;
            let f: Vec<&str> = text.split_whitespace().collect();
            if f.len() != 4 || f[0] != "branch" {
                return Err(Error::Parse {
                    line,
                    msg: "malformed branch line".into(),
                });
            }
            let perr = |m: String| Error::Parse { line, msg: m };
            branches.push(BranchSpec {
                shift_hz: f[1]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?,
                conjugate: match f[2] {
                    "0" => false,
                    "1" => true,
                    other => return Err(perr(format!("bad conjugate flag {other:?}"))),
                },
                n_taps: f[3]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
            });
        }
        let config = FreshConfig {
            branches,
            sample_rate_hz,
            step_size,
        };
        if config.fingerprint() != hash {
            return Err(Error::Config(
                "snapshot config_hash does not match its branch description".into(),
            ));
        }
        let mut state = FreshState::starting_at(&config, sample_index)?;
        let n_weights: usize = parse_at(&next("weights")?, "weights")?;
        if n_weights != state.w_re.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "weight count mismatch".into(),
            });
        }
        for i in 0..n_weights {
            let w = parse_complex(&next("weight")?)?;
            state.w_re[i] = w.re;
            state.w_im[i] = w.im;
        }
        let n_delay: usize = parse_at(&next("delay")?, "delay")?;
        if n_delay != state.w_re.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "delay count mismatch".into(),
            });
        }
        for b in 0..config.branches.len() {
            let taps = config.branches[b].n_taps;
            let base = 2 * state.offsets[b];
            for t in 0..taps {
                let v = parse_complex(&next("delay value")?)?;
                for at in [base + t, base + t + taps] {
                    state.l_re[at] = v.re;
                    state.l_im[at] = v.im;
                }
            }
        }
        if !state.weights_finite() {
            return Err(Error::invalid("snapshot contains non-finite weights"));
        }
        Ok((config, state))
    }
}

fn zip_planes(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter()
        .zip(im)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect()
}

fn keyed(entry: &(usize, String), key: &str) -> Result<String> {
    let (line, text) = entry;
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
        _ => Err(Error::Parse {
            line: *line,
            msg: format!("expected `{key} <value>`, got {text:?}"),
        }),
    }
}

fn parse_at<T: std::str::FromStr>(entry: &(usize, String), key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    keyed(entry, key)?
        .parse()
        .map_err(|e: T::Err| Error::Parse {
            line: entry.0,
            msg: format!("{key}: {e}"),
        })
}

fn parse_complex((line, text): &(usize, String)) -> Result<Complex64> {
    let mut it = text.split_whitespace().map(str::parse::<f64>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(re)), Some(Ok(im)), None) => Ok(Complex64::new(re, im)),
        _ => Err(Error::Parse {
            line: *line,
            msg: format!("expected `<re> <im>`, got {text:?}"),
        }),
    }
}

/// Push one input sample through the shifters and return `y(n)` with the
/// current weights.
pub fn filter_sample(
    state: &mut FreshState,
    config: &FreshConfig,
    x_n: Complex64,
) -> Result<Complex64> {
    state.check_config(config)?;
    Ok(state.step(x_n, None)?.0)
}

/// One LMS iteration. Returns `(y(n), ε(n) = d(n) − y(n))`.
///
/// Divergence is reported at the first sample whose output or error is not
/// finite.
pub fn lms_step(
    state: &mut FreshState,
    config: &FreshConfig,
    x_n: Complex64,
    d_n: Complex64,
) -> Result<(Complex64, Complex64)> {
    state.check_config(config)?;
    state.step(x_n, Some(d_n))
}

/// Per-sample squared error of an adaptation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTrace {
    pub squared_error: Vec<f64>,
    pub window: usize,
}

impl MseTrace {
    pub const DEFAULT_WINDOW: usize = 200;

    /// Trailing moving average over `window` samples (fewer at the start).
    pub fn time_averaged(&self) -> Vec<f64> {
        moving_average(&self.squared_error, self.window)
    }

    /// Mean squared error over `range`.
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> f64 {
        let s = &self.squared_error[range];
        if s.is_empty() {
            return 0.0;
        }
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// Trailing mean with the window clipped at the start of the sequence.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone)]
pub struct BlindRun {
    pub output: IqBuffer,
    pub trace: MseTrace,
    pub state: FreshState,
}

/// Blind adaptation from zero weights with the input as its own training
/// signal.
pub fn run_blind(x: &IqBuffer, config: &FreshConfig) -> Result<BlindRun> {
    run_blind_from(x, config, FreshState::new(config)?)
}

/// Blind adaptation continuing from an existing state.
pub fn run_blind_from(
    x: &IqBuffer,
    config: &FreshConfig,
    mut state: FreshState,
) -> Result<BlindRun> {
    if x.is_empty() {
        return Err(Error::invalid("cannot adapt on an empty buffer"));
    }
    if x.sample_rate_hz() != config.sample_rate_hz {
        return Err(Error::Config(format!(
            "buffer rate {} differs from filter rate {}",
            x.sample_rate_hz(),
            config.sample_rate_hz
        )));
    }
    state.check_config(config)?;
    let mut y = Vec::with_capacity(x.len());
    let mut se = Vec::with_capacity(x.len());
    for &x_n in x.samples() {
        let (y_n, e_n) = state.step(x_n, Some(x_n))?;
        y.push(y_n);
        se.push(e_n.norm_sqr());
    }
    if !state.weights_finite() {
        return Err(Error::Divergence {
            sample_index: state.sample_index - 1,
        });
    }
    Ok(BlindRun {
        output: IqBuffer::from_trusted(y, x.sample_rate_hz()),
        trace: MseTrace {
            squared_error: se,
            window: MseTrace::DEFAULT_WINDOW,
        },
        state,
    })
}

/// Filter with frozen weights (no adaptation).
pub fn run_frozen(x: &IqBuffer, config: &FreshConfig, mut state: FreshState) -> Result<IqBuffer> {
    state.check_config(config)?;
    let y = x
        .samples()
        .iter()
        .map(|&x_n| state.step(x_n, None).map(|(y, _)| y))
        .collect::<Result<Vec<_>>>()?;
    Ok(IqBuffer::from_trusted(y, x.sample_rate_hz()))
}

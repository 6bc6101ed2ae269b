//! Persisted CFAR thresholds.
//!
//! File format (one threshold per line after the header; `#` comments and
//! blank lines ignored):
//!
//! ```text
//! pf_target,lambda,n_trials,spec_hash,seed
//! 0.01,0.0731826512,10000,9c1e0d4b2f6a7788,1
//! ```
//!
//! `lambda` is written in shortest round-trip form so a reloaded threshold
//! is bit-identical; `spec_hash` is 16 hex digits.

use crate::detector::CalibratedThreshold;
use crate::{Error, Result};
use std::path::Path;

const HEADER: &str = "pf_target,lambda,n_trials,spec_hash,seed";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationStore {
    thresholds: Vec<CalibratedThreshold>,
}

fn same_key(t: &CalibratedThreshold, key: &(u64, f64, usize, u64)) -> bool {
    (t.spec_hash, t.pf_target, t.n_calibration_trials, t.seed) == *key
}

impl CalibrationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn thresholds(&self) -> &[CalibratedThreshold] {
        &self.thresholds
    }

    /// Threshold calibrated for exactly this detector, target, trial count
    /// and seed; anything else would not reproduce a fresh calibration.
    pub fn lookup(
        &self,
        spec_hash: u64,
        pf_target: f64,
        n_calibration_trials: usize,
        seed: u64,
    ) -> Option<&CalibratedThreshold> {
        self.thresholds
            .iter()
            .find(|t| same_key(t, &(spec_hash, pf_target, n_calibration_trials, seed)))
    }

    /// Insert, replacing any threshold with the same key.
    pub fn insert(&mut self, t: CalibratedThreshold) {
        let key = (t.spec_hash, t.pf_target, t.n_calibration_trials, t.seed);
        self.thresholds.retain(|o| !same_key(o, &key));
        self.thresholds.push(t);
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\n");
        let mut sorted = self.thresholds.clone();
        sorted.sort_by(|a, b| {
            a.spec_hash
                .cmp(&b.spec_hash)
                .then(a.pf_target.total_cmp(&b.pf_target))
        });
        for t in sorted {
            s.push_str(&format!(
                "{:?},{:?},{},{:016x},{}\n",
                t.pf_target, t.lambda, t.n_calibration_trials, t.spec_hash, t.seed
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut store = Self::new();
        let mut saw_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != HEADER {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected header {HEADER:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            if f.len() != 5 {
                return Err(perr(format!("expected 5 fields, got {}", f.len())));
            }
            store.insert(CalibratedThreshold {
                pf_target: f[0].parse().map_err(|e| perr(format!("pf_target: {e}")))?,
                lambda: f[1].parse().map_err(|e| perr(format!("lambda: {e}")))?,
                n_calibration_trials: f[2].parse().map_err(|e| perr(format!("n_trials: {e}")))?,
                spec_hash: u64::from_str_radix(f[3], 16)
                    .map_err(|e| perr(format!("spec_hash: {e}")))?,
                seed: f[4].parse().map_err(|e| perr(format!("seed: {e}")))?,
            });
        }
        Ok(store)
    }

    /// Missing file → empty store.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_text(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

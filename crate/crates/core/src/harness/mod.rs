//! Monte-Carlo experiment harness.
//!
//! Experiments are described by an [`ExperimentConfig`] (a flat key-value
//! file plus presets), expanded into one [`ExperimentSpec`] per
//! `(method, record length)` pair, and executed with trials fanned out over
//! [`crate::par`]. Every trial draws from a stream keyed on
//! `(seed, purpose, record length, SNR, trial index)`, so results do not
//! depend on thread scheduling and the four methods see the same received
//! records trial for trial.

mod calibration;
mod config;
mod mse;
mod records;
mod sweep;

pub use calibration::CalibrationStore;
pub use config::{EnergyThreshold, ExperimentConfig, Preset};
pub use mse::{run_mse_experiment, write_mse_csv, MseCurve, MseRow, MseSpec};
pub use records::{emit_csv, fmt_sig6, parse_records, write_records, SweepRecord, CSV_HEADER};
pub use sweep::{
    caf_rows, received_record, run_detection_sweep, run_plan, write_caf_csv, CafRow,
    ExperimentSpec, SweepOutcome,
};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    CycloDirect,
    CycloFresh,
    EnergyKnown,
    EnergyUncertain,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::CycloDirect,
        Method::CycloFresh,
        Method::EnergyKnown,
        Method::EnergyUncertain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CycloDirect => "cyclo-direct",
            Method::CycloFresh => "cyclo-fresh",
            Method::EnergyKnown => "energy-known",
            Method::EnergyUncertain => "energy-uncertain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

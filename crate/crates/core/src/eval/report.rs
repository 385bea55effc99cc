//! Tabular experiment output.

use std::path::Path;

use super::link::ReceiverKind;
use super::metrics::MseDb;
use crate::channel::{Fading, NoiseKind};
use crate::error::{Error, Result};
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment: String,
    pub receiver: ReceiverKind,
    pub order: u32,
    pub snr_db: f64,
    pub kappa_t: f64,
    pub kappa_r: f64,
    pub noise_kind: NoiseKind,
    pub fading: Fading,
    /// Source reconstruction error.
    pub mse: MseDb,
    /// Symbol estimation error.
    pub symbol_mse: MseDb,
    pub runs: usize,
    pub seed: u64,
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "experiment",
    "receiver",
    "m",
    "snr_db",
    "kappa_t",
    "kappa_r",
    "noise_kind",
    "fading",
    "mse_linear",
    "mse_db",
    "symbol_mse_linear",
    "symbol_mse_db",
    "runs",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// Not part of the CSV, which must stay reproducible.
    pub elapsed_secs: f64,
}

impl ExperimentReport {
    pub fn find(&self, receiver: ReceiverKind, order: u32, snr_db: f64, noise: NoiseKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.receiver == receiver && r.order == order && r.snr_db == snr_db && r.noise_kind == noise
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.receiver.as_str().to_string(),
                r.order.to_string(),
                r.snr_db.to_string(),
                r.kappa_t.to_string(),
                r.kappa_r.to_string(),
                r.noise_kind.as_str().to_string(),
                r.fading.as_str().to_string(),
                r.mse.linear.to_string(),
                r.mse.db.to_string(),
                r.symbol_mse.linear.to_string(),
                r.symbol_mse.db.to_string(),
                r.runs.to_string(),
                r.seed.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

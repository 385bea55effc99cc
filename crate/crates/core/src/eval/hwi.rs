//! Receiver-impairment sweep under Rayleigh block fading.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::link::{draw_link, score_estimate, LinkSetup, Receiver};
use super::metrics::{box_stats, to_db, BoxStats, MseDb};
use super::report::finish;
use crate::channel::{ChannelConfig, Fading, NoiseKind};
use crate::data::SourceKind;
use crate::ddpm::{NoiseSchedule, SampleOptions, SamplerVariance};
use crate::error::{Error, Result};
use crate::modem::QamSpec;
use crate::neural::ConditionalMlp;
use crate::numerics::RngStream;
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HwiSweepConfig {
    pub order: u32,
    pub snr_db: f64,
    pub kappa_t: f64,
    pub kappa_r: Vec<f64>,
    pub fading: Fading,
    pub coherence_block: usize,
    pub noise_kind: NoiseKind,
    pub power: f64,
    pub realizations: usize,
    pub symbols: usize,
    pub source: SourceKind,
    pub sampler_variance: SamplerVariance,
    /// First reverse step for the diffusion receiver; 0 means `T`.
    pub t_start: usize,
}

impl Default for HwiSweepConfig {
    fn default() -> Self {
        Self {
            order: 64,
            snr_db: 20.0,
            kappa_t: 0.05,
            kappa_r: vec![0.01, 0.05, 0.10, 0.15],
            fading: Fading::Rayleigh,
            coherence_block: 1,
            noise_kind: NoiseKind::Gaussian,
            power: 1.0,
            realizations: 20,
            symbols: 1000,
            source: SourceKind::Uniform,
            sampler_variance: SamplerVariance::Beta,
            t_start: 0,
        }
    }
}

impl HwiSweepConfig {
    pub fn setup(&self, kappa_r: f64) -> Result<LinkSetup> {
        let channel = ChannelConfig {
            power: self.power,
            kappa_t: self.kappa_t,
            kappa_r,
            noise_variance: 0.0,
            fading: self.fading,
            noise_kind: self.noise_kind,
            coherence_block: self.coherence_block,
        }
        .with_snr_db(self.snr_db);
        channel.validate()?;
        Ok(LinkSetup {
            spec: QamSpec::new(self.order)?,
            channel,
            symbols: self.symbols,
            source: self.source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwiPoint {
    pub kappa_r: f64,
    /// Source MSE of every realization, in order.
    pub realizations: Vec<MseDb>,
    pub symbol_realizations: Vec<MseDb>,
    /// Quartiles of the linear source MSE.
    pub stats: BoxStats,
}

impl HwiPoint {
    pub fn median_db(&self) -> f64 {
        to_db(self.stats.median)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwiReport {
    pub config: HwiSweepConfig,
    pub seed: u64,
    pub points: Vec<HwiPoint>,
    pub elapsed_secs: f64,
}

pub const BOXPLOT_COLUMNS: [&str; 16] = [
    "experiment",
    "receiver",
    "m",
    "snr_db",
    "kappa_t",
    "kappa_r",
    "noise_kind",
    "fading",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "median_db",
    "runs",
    "seed",
];

impl HwiReport {
    /// Largest minus smallest median MSE in dB across the grid.
    pub fn median_spread_db(&self) -> f64 {
        let m: Vec<f64> = self.points.iter().map(HwiPoint::median_db).collect();
        m.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - m.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn boxplot_csv(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BOXPLOT_COLUMNS)?;
        for p in &self.points {
            let s = &p.stats;
            w.write_record([
                "hwi-sweep".to_string(),
                "ddpm".to_string(),
                c.order.to_string(),
                c.snr_db.to_string(),
                c.kappa_t.to_string(),
                p.kappa_r.to_string(),
                c.noise_kind.as_str().to_string(),
                c.fading.as_str().to_string(),
                s.min.to_string(),
                s.q1.to_string(),
                s.median.to_string(),
                s.q3.to_string(),
                s.max.to_string(),
                p.median_db().to_string(),
                p.realizations.len().to_string(),
                self.seed.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn realizations_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kappa_r", "realization", "mse_linear", "mse_db", "symbol_mse_linear", "symbol_mse_db", "seed"])?;
        for p in &self.points {
            for (i, (m, s)) in p.realizations.iter().zip(&p.symbol_realizations).enumerate() {
                w.write_record([
                    p.kappa_r.to_string(),
                    i.to_string(),
                    m.linear.to_string(),
                    m.db.to_string(),
                    s.linear.to_string(),
                    s.db.to_string(),
                    self.seed.to_string(),
                ])?;
            }
        }
        finish(w)
    }

    pub fn write(&self, boxplot: &Path, realizations: &Path) -> Result<()> {
        write_atomic(boxplot, &self.boxplot_csv()?)?;
        write_atomic(realizations, &self.realizations_csv()?)
    }
}

/// Every kappa_r point reuses the same per-realization substreams, so the
/// grid points differ only in the impairment level.
pub fn hwi_sweep(cfg: &HwiSweepConfig, model: &ConditionalMlp, sched: &NoiseSchedule, seed: u64) -> Result<HwiReport> {
    if cfg.kappa_r.is_empty() || cfg.realizations == 0 || cfg.symbols == 0 {
        return Err(Error::InvalidArgument("hwi sweep needs a kappa_r grid, realizations and symbols".into()));
    }
    let started = Instant::now();
    let root = RngStream::new(seed).substream("hwi-sweep");
    let rx = Receiver::Ddpm {
        model,
        sched,
        options: SampleOptions {
            t_start: (cfg.t_start > 0).then_some(cfg.t_start),
            variance: cfg.sampler_variance,
        },
    };
    let mut points = Vec::with_capacity(cfg.kappa_r.len());
    for &kappa_r in &cfg.kappa_r {
        let setup = cfg.setup(kappa_r)?;
        let mut realizations = Vec::with_capacity(cfg.realizations);
        let mut symbol_realizations = Vec::with_capacity(cfg.realizations);
        for i in 0..cfg.realizations {
            let run_rng = root.substream_index(i as u64);
            let draw = draw_link(&setup, &run_rng)?;
            let x_hat = rx.estimate(&draw.received_pairs(), &mut run_rng.substream("sampler"))?;
            let score = score_estimate(&setup, &draw, &x_hat)?;
            realizations.push(MseDb::from_linear(score.source_mse));
            symbol_realizations.push(MseDb::from_linear(score.symbol_mse));
        }
        let linear: Vec<f64> = realizations.iter().map(|m| m.linear).collect();
        points.push(HwiPoint {
            kappa_r,
            stats: box_stats(&linear)?,
            realizations,
            symbol_realizations,
        });
    }
    Ok(HwiReport {
        config: cfg.clone(),
        seed,
        points,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

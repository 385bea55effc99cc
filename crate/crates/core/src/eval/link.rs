//! Source-to-source link simulation and the SNR sweep.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::metrics::{mse_db, MseDb};
use super::report::{ExperimentReport, SweepRow};
use crate::baseline::{baseline_train, BaselineConfig, BaselineDnn};
use crate::channel::{complex_to_pairs, draw_channel, transmit, ChannelConfig, ChannelDraw, Fading, NoiseKind};
use crate::data::{source_batch, SourceKind};
use crate::ddpm::{sample, NoiseSchedule, SampleOptions, SamplerVariance};
use crate::error::{Error, Result};
use crate::modem::{qam_demodulate, qam_modulate, QamSpec, Quantizer};
use crate::neural::ConditionalMlp;
use crate::numerics::{RngStream, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    Ddpm,
    Dnn,
}

impl ReceiverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::Ddpm => "ddpm",
            ReceiverKind::Dnn => "dnn",
        }
    }
}

/// Everything needed to simulate one transmitted batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSetup {
    pub spec: QamSpec,
    pub channel: ChannelConfig,
    /// Complex symbols per batch; the source has twice as many values.
    pub symbols: usize,
    pub source: SourceKind,
}

impl LinkSetup {
    pub fn quantizer(&self) -> Quantizer {
        Quantizer::new(self.spec.bits_per_axis(), -1.0, 1.0).expect("bits per axis is at least 2")
    }
}

#[derive(Debug, Clone)]
pub struct LinkDraw {
    pub source: Vec<f64>,
    pub symbols: Vec<Complex64>,
    pub channel: ChannelDraw,
}

impl LinkDraw {
    /// Received batch as `K x 2` rows.
    pub fn received_pairs(&self) -> Tensor2 {
        complex_to_pairs(&self.channel.y)
    }
}

/// Source, fading and noise come from separate substreams of `rng`.
pub fn draw_link(setup: &LinkSetup, rng: &RngStream) -> Result<LinkDraw> {
    let source = source_batch(setup.source, 2 * setup.symbols, &mut rng.substream("source"))?;
    let symbols = qam_modulate(&setup.quantizer().quantize(&source), &setup.spec)?;
    let h = draw_channel(&setup.channel, symbols.len(), &mut rng.substream("fading"))?;
    let channel = transmit(&symbols, &setup.channel, &h, &mut rng.substream("noise"))?;
    Ok(LinkDraw { source, symbols, channel })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkScore {
    /// Source samples vs their reconstruction after demodulation.
    pub source_mse: f64,
    /// Receiver output vs `sqrt(p) s`, per real dimension.
    pub symbol_mse: f64,
}

/// Scores a receiver output (`K x 2`, in units of the received signal).
pub fn score_estimate(setup: &LinkSetup, draw: &LinkDraw, x_hat: &Tensor2) -> Result<LinkScore> {
    if x_hat.shape() != (draw.symbols.len(), 2) {
        return Err(Error::ShapeMismatch {
            op: "score_estimate",
            left: x_hat.shape(),
            right: (draw.symbols.len(), 2),
        });
    }
    let sqrt_p = setup.channel.power.sqrt();
    let est: Vec<Complex64> = (0..x_hat.rows())
        .map(|r| Complex64::new(x_hat.get(r, 0), x_hat.get(r, 1)) / sqrt_p)
        .collect();
    let recovered = setup.quantizer().dequantize(&qam_demodulate(&est, &setup.spec))?;
    let source_mse = mse_db(&draw.source, &recovered)?.linear;
    let target = complex_to_pairs(&draw.symbols).scale(sqrt_p);
    let symbol_mse = mse_db(target.data(), x_hat.data())?.linear;
    Ok(LinkScore { source_mse, symbol_mse })
}

/// A receiver ready to estimate transmitted symbols from received pairs.
#[derive(Debug, Clone, Copy)]
pub enum Receiver<'a> {
    Ddpm {
        model: &'a ConditionalMlp,
        sched: &'a NoiseSchedule,
        options: SampleOptions,
    },
    Dnn(&'a BaselineDnn),
}

impl Receiver<'_> {
    pub fn kind(&self) -> ReceiverKind {
        match self {
            Receiver::Ddpm { .. } => ReceiverKind::Ddpm,
            Receiver::Dnn(_) => ReceiverKind::Dnn,
        }
    }

    /// The diffusion receiver starts the reverse chain at the received batch.
    pub fn estimate(&self, y: &Tensor2, rng: &mut RngStream) -> Result<Tensor2> {
        match self {
            Receiver::Ddpm { model, sched, options } => sample(*model, y, sched, rng, *options),
            Receiver::Dnn(model) => model.forward(y),
        }
    }
}

pub fn default_snr_grid() -> Vec<f64> {
    (0..=12).map(|i| -10.0 + 2.5 * f64::from(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrSweepConfig {
    pub orders: Vec<u32>,
    pub snr_db: Vec<f64>,
    pub kappa_t: f64,
    pub kappa_r: f64,
    pub noise_kinds: Vec<NoiseKind>,
    pub fading: Fading,
    pub coherence_block: usize,
    pub power: f64,
    /// Sampling repetitions averaged per point.
    pub runs: usize,
    pub symbols: usize,
    pub source: SourceKind,
    pub receivers: Vec<ReceiverKind>,
    pub sampler_variance: SamplerVariance,
    /// First reverse step for the diffusion receiver; 0 means `T`.
    pub t_start: usize,
}

impl Default for SnrSweepConfig {
    fn default() -> Self {
        Self {
            orders: vec![16, 64, 256],
            snr_db: default_snr_grid(),
            kappa_t: 0.05,
            kappa_r: 0.15,
            noise_kinds: vec![NoiseKind::Gaussian, NoiseKind::Laplacian],
            fading: Fading::None,
            coherence_block: 1,
            power: 1.0,
            runs: 10,
            symbols: 1000,
            source: SourceKind::Uniform,
            receivers: vec![ReceiverKind::Ddpm, ReceiverKind::Dnn],
            sampler_variance: SamplerVariance::Beta,
            t_start: 0,
        }
    }
}

impl SnrSweepConfig {
    pub fn validate(&self) -> Result<()> {
        for &m in &self.orders {
            QamSpec::new(m)?;
        }
        if self.orders.is_empty() || self.snr_db.is_empty() || self.noise_kinds.is_empty() || self.receivers.is_empty() {
            return Err(Error::InvalidArgument("sweep grids must be non-empty".into()));
        }
        if self.runs == 0 || self.symbols == 0 {
            return Err(Error::InvalidArgument("runs and symbols must be positive".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("SNR grid must be finite".into()));
        }
        self.channel(NoiseKind::Gaussian, self.snr_db[0]).validate()
    }

    pub fn channel(&self, noise_kind: NoiseKind, snr_db: f64) -> ChannelConfig {
        ChannelConfig {
            power: self.power,
            kappa_t: self.kappa_t,
            kappa_r: self.kappa_r,
            noise_variance: 0.0,
            fading: self.fading,
            noise_kind,
            coherence_block: self.coherence_block,
        }
        .with_snr_db(snr_db)
    }
}

/// Baseline models keyed by constellation order, SNR and noise law.
#[derive(Debug, Clone, Default)]
pub struct BaselineSet {
    models: BTreeMap<(u32, i64, NoiseKind), BaselineDnn>,
}

fn snr_key(snr_db: f64) -> i64 {
    (snr_db * 1000.0).round() as i64
}

impl BaselineSet {
    pub fn insert(&mut self, order: u32, snr_db: f64, noise: NoiseKind, model: BaselineDnn) {
        self.models.insert((order, snr_key(snr_db), noise), model);
    }

    pub fn get(&self, order: u32, snr_db: f64, noise: NoiseKind) -> Result<&BaselineDnn> {
        self.models.get(&(order, snr_key(snr_db), noise)).ok_or_else(|| {
            Error::MissingModel(format!(
                "baseline for {order}-QAM at {snr_db} dB, {} noise",
                noise.as_str()
            ))
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64, NoiseKind, &BaselineDnn)> {
        self.models
            .iter()
            .map(|(&(m, s, n), model)| (m, s as f64 / 1000.0, n, model))
    }
}

/// One baseline per `(M, SNR, noise law)` point of the sweep.
pub fn train_baselines(sweep: &SnrSweepConfig, cfg: &BaselineConfig, seed: u64) -> Result<BaselineSet> {
    sweep.validate()?;
    let root = RngStream::new(seed).substream("baseline");
    let mut set = BaselineSet::default();
    for &m in &sweep.orders {
        let spec = QamSpec::new(m)?;
        for &snr in &sweep.snr_db {
            for &noise in &sweep.noise_kinds {
                let label = format!("m{m}/snr{snr}/{}", noise.as_str());
                let mut rng = root.substream(&label);
                let trained = baseline_train(&spec, &sweep.channel(noise, snr), cfg, cfg.iterations_for(&spec), &mut rng)?;
                set.insert(m, snr, noise, trained.model);
            }
        }
    }
    Ok(set)
}

/// Paired evaluation: every receiver sees the same draws at each point.
pub fn snr_sweep(
    cfg: &SnrSweepConfig,
    sched: &NoiseSchedule,
    ddpm: &BTreeMap<u32, ConditionalMlp>,
    baselines: &BaselineSet,
    seed: u64,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let root = RngStream::new(seed).substream("snr-sweep");
    let options = SampleOptions {
        t_start: (cfg.t_start > 0).then_some(cfg.t_start),
        variance: cfg.sampler_variance,
    };
    let mut rows = Vec::new();
    for &m in &cfg.orders {
        let spec = QamSpec::new(m)?;
        for &snr in &cfg.snr_db {
            let point_rng = root.substream(&format!("m{m}/snr{snr}"));
            for &noise in &cfg.noise_kinds {
                let setup = LinkSetup {
                    spec,
                    channel: cfg.channel(noise, snr),
                    symbols: cfg.symbols,
                    source: cfg.source,
                };
                let receivers = cfg
                    .receivers
                    .iter()
                    .map(|kind| {
                        Ok(match kind {
                            ReceiverKind::Ddpm => Receiver::Ddpm {
                                model: ddpm
                                    .get(&m)
                                    .ok_or_else(|| Error::MissingModel(format!("diffusion model for {m}-QAM")))?,
                                sched,
                                options,
                            },
                            ReceiverKind::Dnn => Receiver::Dnn(baselines.get(m, snr, noise)?),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut totals = vec![(0.0, 0.0); receivers.len()];
                for run in 0..cfg.runs {
                    let run_rng = point_rng.substream_index(run as u64);
                    let draw = draw_link(&setup, &run_rng)?;
                    let y = draw.received_pairs();
                    for (rx, total) in receivers.iter().zip(&mut totals) {
                        let mut rng = run_rng.substream("sampler");
                        let score = score_estimate(&setup, &draw, &rx.estimate(&y, &mut rng)?)?;
                        total.0 += score.source_mse;
                        total.1 += score.symbol_mse;
                    }
                }
                let n = cfg.runs as f64;
                for (rx, (src, sym)) in receivers.iter().zip(totals) {
                    rows.push(SweepRow {
                        experiment: "snr-sweep".into(),
                        receiver: rx.kind(),
                        order: m,
                        snr_db: snr,
                        kappa_t: cfg.kappa_t,
                        kappa_r: cfg.kappa_r,
                        noise_kind: noise,
                        fading: cfg.fading,
                        mse: MseDb::from_linear(src / n),
                        symbol_mse: MseDb::from_linear(sym / n),
                        runs: cfg.runs,
                        seed,
                    });
                }
            }
        }
    }
    Ok(ExperimentReport {
        experiment: "snr-sweep".into(),
        seed,
        rows,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Parameterized;

    fn noiseless(m: u32) -> LinkSetup {
        LinkSetup {
            spec: QamSpec::new(m).unwrap(),
            channel: ChannelConfig {
                kappa_t: 0.0,
                kappa_r: 0.0,
                noise_variance: 0.0,
                ..ChannelConfig::default()
            },
            symbols: 20_000,
            source: SourceKind::Uniform,
        }
    }

    #[test]
    fn default_grid_spans_minus_ten_to_twenty() {
        let g = default_snr_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], -10.0);
        assert_eq!(g[12], 20.0);
    }

    #[test]
    fn zero_db_means_unit_noise_variance() {
        let c = SnrSweepConfig::default().channel(NoiseKind::Gaussian, 0.0);
        assert_eq!(c.noise_variance, 1.0);
    }

    #[test]
    fn noiseless_link_is_limited_by_quantization() {
        for m in QamSpec::SUPPORTED {
            let setup = noiseless(m);
            let draw = draw_link(&setup, &RngStream::new(1)).unwrap();
            let score = score_estimate(&setup, &draw, &draw.received_pairs()).unwrap();
            let step = setup.quantizer().step();
            let expect = step * step / 12.0;
            assert!((score.source_mse / expect - 1.0).abs() < 0.05, "M={m}: {} vs {expect}", score.source_mse);
            assert!(score.symbol_mse < 1e-24);
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let setup = noiseless(16);
        let a = draw_link(&setup, &RngStream::new(4)).unwrap();
        let b = draw_link(&setup, &RngStream::new(4)).unwrap();
        assert_eq!(a.channel, b.channel);
        assert_eq!(a.source, b.source);
    }

    #[test]
    fn missing_models_are_reported() {
        let cfg = SnrSweepConfig {
            orders: vec![16],
            snr_db: vec![0.0],
            noise_kinds: vec![NoiseKind::Gaussian],
            runs: 1,
            symbols: 4,
            ..SnrSweepConfig::default()
        };
        let sched = crate::ddpm::make_schedule(10, 1e-4, 0.02).unwrap();
        let err = snr_sweep(&cfg, &sched, &BTreeMap::new(), &BaselineSet::default(), 1).unwrap_err();
        assert!(matches!(err, Error::MissingModel(_)));
    }

    #[test]
    fn paired_rows_per_receiver() {
        let cfg = SnrSweepConfig {
            orders: vec![16],
            snr_db: vec![0.0, 10.0],
            runs: 2,
            symbols: 8,
            ..SnrSweepConfig::default()
        };
        let sched = crate::ddpm::make_schedule(10, 1e-4, 0.02).unwrap();
        let mlp_cfg = crate::neural::MlpConfig {
            hidden_dim: 8,
            steps: 10,
            ..Default::default()
        };
        let mut rng = RngStream::new(3);
        let ddpm = BTreeMap::from([(16, ConditionalMlp::new(&mlp_cfg, &mut rng).unwrap())]);
        let mut baselines = BaselineSet::default();
        for &snr in &cfg.snr_db {
            for &n in &cfg.noise_kinds {
                baselines.insert(16, snr, n, BaselineDnn::new(2, 4, &mut rng));
            }
        }
        assert_eq!(baselines.len(), 4);
        let report = snr_sweep(&cfg, &sched, &ddpm, &baselines, 5).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * 2);
        for row in &report.rows {
            assert!((row.mse.db - 10.0 * row.mse.linear.log10()).abs() < 1e-12);
            assert_eq!(row.runs, 2);
        }
        let again = snr_sweep(&cfg, &sched, &ddpm, &baselines, 5).unwrap();
        assert_eq!(report.to_csv().unwrap(), again.to_csv().unwrap());
        assert!(ddpm[&16].parameters_finite());
    }
}

use serde::{Deserialize, Serialize};

use super::process::{forward_jump_rows, noise_prediction_loss};
use super::NoiseSchedule;
use crate::error::{Error, Result};
use crate::neural::{Adam, AdamConfig, ConditionalMlp, Parameterized};
use crate::numerics::{sample_standard_normal, RngStream, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Save a copy of the parameters every this many epochs; 0 disables.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 1000,
            lr: 1e-3,
            snapshot_every: 400,
        }
    }
}

/// Model parameters saved at the end of `epoch` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub model: ConditionalMlp,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ConditionalMlp,
    pub snapshots: Vec<Snapshot>,
    /// Row-weighted mean batch loss for every epoch.
    pub epoch_losses: Vec<f64>,
}

fn check_compatible(model: &ConditionalMlp, cols: usize, sched: &NoiseSchedule) -> Result<()> {
    if model.input_dim() != cols {
        return Err(Error::ShapeMismatch {
            op: "training data",
            left: (0, cols),
            right: (0, model.input_dim()),
        });
    }
    if model.steps() != sched.steps() {
        return Err(Error::InvalidArgument(format!(
            "model embeds {} steps but the schedule has {}",
            model.steps(),
            sched.steps()
        )));
    }
    Ok(())
}

/// One Adam step on the noise-prediction loss of a mini-batch.
///
/// Each row draws its own `t ~ Unif{1..T}` and `eps ~ N(0, I)`. Returns the
/// loss before the update.
pub fn training_step(
    model: &mut ConditionalMlp,
    optimizer: &mut Adam,
    x0_batch: &Tensor2,
    sched: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<f64> {
    check_compatible(model, x0_batch.cols(), sched)?;
    let steps: Vec<usize> = (0..x0_batch.rows()).map(|_| 1 + rng.index(sched.steps())).collect();
    let eps = sample_standard_normal(rng, x0_batch.rows(), x0_batch.cols());
    let x_t = forward_jump_rows(x0_batch, &steps, sched, &eps)?;
    let (eps_hat, cache) = model.forward_with_cache(&x_t, &steps)?;
    let loss = noise_prediction_loss(&eps, &eps_hat)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let scale = 2.0 / x0_batch.rows() as f64;
    let upstream = eps_hat.zip_map(&eps, |p, e| scale * (p - e))?;
    let grads = model.backward_from_cache(&cache, &upstream)?;
    optimizer.step(model, &grads)?;
    if !model.parameters_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(loss)
}

pub fn train(
    model: ConditionalMlp,
    dataset: &Tensor2,
    sched: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    train_with_progress(model, dataset, sched, config, rng, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, epoch_loss)` after every epoch.
pub fn train_with_progress(
    mut model: ConditionalMlp,
    dataset: &Tensor2,
    sched: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut RngStream,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
    }
    if dataset.rows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    check_compatible(&model, dataset.cols(), sched)?;
    let mut optimizer = Adam::new(AdamConfig::with_lr(config.lr), &model);
    let mut order: Vec<usize> = (0..dataset.rows()).collect();
    let mut snapshots = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.select_rows(chunk);
            let loss = match training_step(&mut model, &mut optimizer, &batch, sched, rng) {
                Err(Error::NonFiniteLoss) => return Err(Error::Divergence { epoch }),
                other => other?,
            };
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / dataset.rows() as f64;
        epoch_losses.push(epoch_loss);
        on_epoch(epoch, epoch_loss);
        if config.snapshot_every > 0 && epoch % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                epoch,
                model: model.clone(),
            });
        }
    }
    Ok(TrainOutcome {
        model,
        snapshots,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::super::make_schedule;
    use super::*;
    use crate::neural::MlpConfig;

    fn tiny_model(rng: &mut RngStream, steps: usize) -> ConditionalMlp {
        let cfg = MlpConfig {
            hidden_dim: 16,
            n_hidden: 2,
            steps,
            ..MlpConfig::default()
        };
        ConditionalMlp::new(&cfg, rng).unwrap()
    }

    #[test]
    fn zero_output_model_loss_is_about_two_per_2d_sample() {
        // With the output layer zeroed, eps_hat = 0 and the expected loss is
        // E|eps|^2 = 2 for 2-D samples.
        let sched = make_schedule(100, 1e-4, 0.02).unwrap();
        let mut rng = RngStream::new(10);
        let mut model = tiny_model(&mut rng, 100);
        model.output_layer_mut().weight.fill(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &model);
        let data = sample_standard_normal(&mut rng, 20_000, 2);
        let loss = training_step(&mut model, &mut opt, &data, &sched, &mut rng).unwrap();
        assert!((loss - 2.0).abs() < 0.06, "{loss}");
    }

    #[test]
    fn snapshot_policy() {
        let sched = make_schedule(10, 1e-3, 0.05).unwrap();
        let mut rng = RngStream::new(11);
        let model = tiny_model(&mut rng, 10);
        let data = sample_standard_normal(&mut rng, 8, 2);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 4,
            lr: 1e-3,
            snapshot_every: 4,
        };
        let out = train(model.clone(), &data, &sched, &cfg, &mut rng).unwrap();
        let epochs: Vec<usize> = out.snapshots.iter().map(|s| s.epoch).collect();
        assert_eq!(epochs, vec![4, 8, 12, 16, 20]);
        assert_eq!(out.epoch_losses.len(), 20);
        assert_eq!(out.snapshots.last().unwrap().model, out.model);

        let one = Tensor2::zeros(1, 2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
            snapshot_every: 400,
        };
        let out = train(model, &one, &sched, &cfg, &mut rng).unwrap();
        assert!(out.snapshots.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let sched = make_schedule(10, 1e-3, 0.05).unwrap();
        let run = || {
            let mut rng = RngStream::new(12);
            let model = tiny_model(&mut rng.substream("init"), 10);
            let data = sample_standard_normal(&mut rng.substream("data"), 32, 2);
            let cfg = TrainConfig {
                epochs: 5,
                batch_size: 8,
                lr: 1e-3,
                snapshot_every: 0,
            };
            train(model, &data, &sched, &cfg, &mut rng).unwrap().model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn incompatible_inputs_rejected() {
        let sched = make_schedule(10, 1e-3, 0.05).unwrap();
        let mut rng = RngStream::new(13);
        let model = tiny_model(&mut rng, 10);
        let cfg = TrainConfig::default();
        assert!(train(model.clone(), &Tensor2::zeros(4, 3), &sched, &cfg, &mut rng).is_err());
        assert!(train(model.clone(), &Tensor2::zeros(0, 2), &sched, &cfg, &mut rng).is_err());
        let other = make_schedule(20, 1e-3, 0.05).unwrap();
        assert!(train(model, &Tensor2::zeros(4, 2), &other, &cfg, &mut rng).is_err());
    }

    #[test]
    fn divergence_reports_epoch() {
        let sched = make_schedule(10, 1e-3, 0.05).unwrap();
        let mut rng = RngStream::new(14);
        let model = tiny_model(&mut rng, 10);
        let data = Tensor2::filled(4, 2, f64::NAN);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            lr: 1e-3,
            snapshot_every: 0,
        };
        assert!(matches!(
            train(model, &data, &sched, &cfg, &mut rng),
            Err(Error::Divergence { epoch: 1 })
        ));
    }
}

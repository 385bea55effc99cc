//! Learned baseline receiver: a three-layer ReLU network regressing the
//! transmitted I/Q pair from the received one.

use serde::{Deserialize, Serialize};

use crate::channel::{complex_to_pairs, draw_channel, transmit, ChannelConfig, RealBatch};
use crate::error::{Error, Result};
use crate::modem::QamSpec;
use crate::neural::{Adam, AdamConfig, Dense, Gradients, Parameterized};
use crate::numerics::{RngStream, Tensor2};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDnn {
    layers: Vec<Dense>,
}

pub struct BaselineCache {
    inputs: Vec<Tensor2>,
    pre_activations: Vec<Tensor2>,
}

impl BaselineDnn {
    pub fn new(io_dim: usize, hidden_dim: usize, rng: &mut RngStream) -> Self {
        Self {
            layers: vec![
                Dense::new(io_dim, hidden_dim, rng),
                Dense::new(hidden_dim, hidden_dim, rng),
                Dense::new(hidden_dim, io_dim, rng),
            ],
        }
    }

    pub(crate) fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() != 3 {
            return Err(Error::Format(format!("baseline needs 3 layers, got {}", layers.len())));
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Format("baseline layer widths disagree".into()));
            }
        }
        if layers[0].fan_in() != layers[2].fan_out() {
            return Err(Error::Format("baseline input and output widths differ".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn io_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].fan_out()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        Ok(self.forward_with_cache(x)?.0)
    }

    pub fn forward_with_cache(&self, x: &Tensor2) -> Result<(Tensor2, BaselineCache)> {
        if x.cols() != self.io_dim() {
            return Err(Error::ShapeMismatch {
                op: "BaselineDnn::forward",
                left: x.shape(),
                right: (x.rows(), self.io_dim()),
            });
        }
        let mut inputs = Vec::with_capacity(3);
        let mut pre_activations = Vec::with_capacity(2);
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            if i == last {
                return Ok((z, BaselineCache { inputs, pre_activations }));
            }
            h = z.map(|v| v.max(0.0));
            pre_activations.push(z);
        }
        unreachable!("baseline has at least one layer")
    }

    /// Gradients of `sum(forward(x) * upstream)`.
    pub fn backward(&self, x: &Tensor2, upstream: &Tensor2) -> Result<Gradients> {
        let (_, cache) = self.forward_with_cache(x)?;
        self.backward_from_cache(&cache, upstream)
    }

    pub fn backward_from_cache(&self, cache: &BaselineCache, upstream: &Tensor2) -> Result<Gradients> {
        let mut d = upstream.clone();
        let mut grads = Vec::with_capacity(6);
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                d = d.zip_map(&cache.pre_activations[i], |g, z| if z > 0.0 { g } else { 0.0 })?;
            }
            let g = self.layers[i].backward(&cache.inputs[i], &d)?;
            grads.push(g.bias);
            grads.push(g.weight);
            d = g.input;
        }
        grads.reverse();
        Ok(Gradients(grads))
    }
}

impl Parameterized for BaselineDnn {
    fn parameters(&self) -> Vec<&Tensor2> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub iterations_qam16: usize,
    pub iterations_qam64: usize,
    pub iterations_qam256: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            batch_size: 256,
            lr: 0.01,
            iterations_qam16: 5000,
            iterations_qam64: 5000,
            iterations_qam256: 30000,
        }
    }
}

impl BaselineConfig {
    pub fn iterations_for(&self, spec: &QamSpec) -> usize {
        match spec.order() {
            16 => self.iterations_qam16,
            64 => self.iterations_qam64,
            _ => self.iterations_qam256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineTraining {
    pub model: BaselineDnn,
    /// Per-iteration training MSE (mean over all real elements).
    pub losses: Vec<f64>,
}

/// Trains on fresh random symbols passed through `channel` every iteration.
pub fn baseline_train(
    spec: &QamSpec,
    channel: &ChannelConfig,
    config: &BaselineConfig,
    iterations: usize,
    rng: &mut RngStream,
) -> Result<BaselineTraining> {
    if iterations == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument("iterations and batch_size must be positive".into()));
    }
    channel.validate()?;
    let mut model = BaselineDnn::new(2, config.hidden_dim, &mut rng.substream("init"));
    let mut optimizer = Adam::new(AdamConfig::with_lr(config.lr), &model);
    let constellation = spec.constellation();
    let sqrt_p = channel.power.sqrt();
    let mut losses = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let s: Vec<_> = (0..config.batch_size)
            .map(|_| constellation[rng.index(constellation.len())])
            .collect();
        let h = draw_channel(channel, s.len(), rng)?;
        let draw = transmit(&s, channel, &h, rng)?;
        let input = complex_to_pairs(&draw.y);
        let target = complex_to_pairs(&s).scale(sqrt_p);
        let (out, cache) = model.forward_with_cache(&input)?;
        let n = out.len() as f64;
        let loss = out
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: it + 1 });
        }
        losses.push(loss);
        let upstream = out.zip_map(&target, |a, b| 2.0 * (a - b) / n)?;
        let grads = model.backward_from_cache(&cache, &upstream)?;
        optimizer.step(&mut model, &grads)?;
        if !model.parameters_finite() {
            return Err(Error::Divergence { epoch: it + 1 });
        }
    }
    Ok(BaselineTraining { model, losses })
}

/// Symbol-wise estimate of the transmitted stacked batch.
pub fn baseline_infer(model: &BaselineDnn, y_r: &RealBatch) -> Result<RealBatch> {
    RealBatch::from_pairs(&model.forward(&y_r.to_pairs())?)
}

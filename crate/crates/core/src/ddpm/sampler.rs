use serde::{Deserialize, Serialize};

use super::process::reverse_mean;
use super::NoiseSchedule;
use crate::error::{Error, Result};
use crate::neural::ConditionalMlp;
use crate::numerics::{sample_standard_normal, RngStream, Tensor2};

/// A model of the noise contained in `x_t` at step `t`.
pub trait NoisePredictor {
    fn input_dim(&self) -> usize;
    fn predict_noise(&self, x: &Tensor2, steps: &[usize]) -> Result<Tensor2>;
}

impl NoisePredictor for ConditionalMlp {
    fn input_dim(&self) -> usize {
        ConditionalMlp::input_dim(self)
    }

    fn predict_noise(&self, x: &Tensor2, steps: &[usize]) -> Result<Tensor2> {
        self.forward(x, steps)
    }
}

/// Standard deviation of the noise injected by each reverse step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerVariance {
    /// `sqrt(beta_t)`
    #[default]
    Beta,
    /// `sqrt(beta_tilde_t)`, the posterior standard deviation.
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleOptions {
    /// First reverse step; `None` starts from `T`.
    pub t_start: Option<usize>,
    pub variance: SamplerVariance,
}

impl SampleOptions {
    pub fn from_step(t_start: usize) -> Self {
        Self {
            t_start: Some(t_start),
            ..Self::default()
        }
    }
}

/// Ancestral sampling from `x_{t_start}` down to `x_0`.
pub fn sample(
    model: &impl NoisePredictor,
    x_start: &Tensor2,
    sched: &NoiseSchedule,
    rng: &mut RngStream,
    options: SampleOptions,
) -> Result<Tensor2> {
    sample_with_trajectory(model, x_start, sched, rng, options, |_, _| {})
}

/// [`sample`], calling `observe(t, x_t)` for every state from `t_start`
/// down to `0`.
pub fn sample_with_trajectory(
    model: &impl NoisePredictor,
    x_start: &Tensor2,
    sched: &NoiseSchedule,
    rng: &mut RngStream,
    options: SampleOptions,
    mut observe: impl FnMut(usize, &Tensor2),
) -> Result<Tensor2> {
    let t_start = options.t_start.unwrap_or(sched.steps());
    sched.check_step(t_start)?;
    if x_start.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "sample",
            left: x_start.shape(),
            right: (x_start.rows(), model.input_dim()),
        });
    }
    let rows = x_start.rows();
    let mut x = x_start.clone();
    let mut steps = vec![0; rows];
    for t in (1..=t_start).rev() {
        observe(t, &x);
        steps.iter_mut().for_each(|s| *s = t);
        let eps_hat = model.predict_noise(&x, &steps)?;
        x = reverse_mean(&x, &eps_hat, t, sched)?;
        if t > 1 {
            let sigma = match options.variance {
                SamplerVariance::Beta => sched.beta(t).sqrt(),
                SamplerVariance::Posterior => sched.posterior_variance(t).sqrt(),
            };
            let z = sample_standard_normal(rng, rows, x.cols());
            x.axpy(sigma, &z)?;
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { step: t });
        }
    }
    observe(0, &x);
    Ok(x)
}

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor2};

/// Anything with a fixed, ordered list of trainable tensors.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor2>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor2>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn parameters_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.is_finite())
    }
}

/// Gradients in the same order and shapes as [`Parameterized::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor2>);

impl Gradients {
    pub fn zeros_like(model: &impl Parameterized) -> Self {
        Self(
            model
                .parameters()
                .iter()
                .map(|p| Tensor2::zeros(p.rows(), p.cols()))
                .collect(),
        )
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|g| g.data().iter().all(|&v| v == 0.0))
    }

    pub(crate) fn ensure_matches(&self, model: &impl Parameterized) -> Result<()> {
        let params = model.parameters();
        if params.len() != self.0.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradient tensors for {} parameter tensors",
                self.0.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(&self.0) {
            p.ensure_same_shape(g, "gradients")?;
        }
        Ok(())
    }
}

/// Affine layer `x W + b` with `W` stored as `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor2,
    pub bias: Tensor2,
}

pub(crate) struct DenseGrads {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub input: Tensor2,
}

impl Dense {
    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Tensor2::from_fn(fan_in, fan_out, |_, _| std * rng.standard_normal()),
            bias: Tensor2::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut out = x.matmul(&self.weight)?;
        out.add_row_broadcast(&self.bias)?;
        Ok(out)
    }

    pub(crate) fn backward(&self, x: &Tensor2, d_out: &Tensor2) -> Result<DenseGrads> {
        Ok(DenseGrads {
            weight: x.matmul_tn(d_out)?,
            bias: d_out.sum_rows(),
            input: d_out.matmul_nt(&self.weight)?,
        })
    }
}

#[cfg(test)]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `(softplus(x), sigmoid(x))` sharing one `exp`.
pub(crate) fn softplus_and_sigmoid(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let sp = x.max(0.0) + e.ln_1p();
    let sg = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, sg)
}

#[cfg(test)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

//! Time-conditioned MLP noise predictor.
//!
//! Each hidden layer is an affine map whose output is scaled elementwise by a
//! learned per-time-step embedding row and passed through softplus. The output
//! layer is affine with the same width as the input.

use serde::{Deserialize, Serialize};

use super::dense::{softplus_and_sigmoid, Dense, Gradients, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor2};

/// Where the time embedding multiplies a hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// `softplus((x W + b) * E[t])`
    #[default]
    Pre,
    /// `softplus(x W + b) * E[t]`
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_hidden: usize,
    pub steps: usize,
    pub embedding: EmbeddingMode,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_dim: 128,
            n_hidden: 3,
            steps: 100,
            embedding: EmbeddingMode::Pre,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMlp {
    pub(crate) hidden: Vec<Dense>,
    /// One `steps x hidden_dim` table per hidden layer; row `t - 1` serves step `t`.
    pub(crate) embeddings: Vec<Tensor2>,
    pub(crate) output: Dense,
    pub(crate) embedding_mode: EmbeddingMode,
}

struct LayerCache {
    input: Tensor2,
    affine: Tensor2,
    // pre mode: affine * E[t]; post mode: softplus(affine)
    inner: Tensor2,
    // sigmoid of the softplus argument, i.e. softplus'
    gate: Tensor2,
}

/// Intermediate values from a forward pass, consumed by the backward pass.
pub struct ForwardCache {
    steps: Vec<usize>,
    layers: Vec<LayerCache>,
    last_hidden: Tensor2,
}

impl ConditionalMlp {
    /// Gaussian `1/sqrt(fan_in)` weights, zero biases, all-ones embeddings.
    pub fn new(config: &MlpConfig, rng: &mut RngStream) -> Result<Self> {
        if config.input_dim == 0 || config.hidden_dim == 0 || config.n_hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must be positive: {config:?}"
            )));
        }
        if config.steps == 0 {
            return Err(Error::InvalidArgument("model needs at least one time-step".into()));
        }
        let mut hidden = Vec::with_capacity(config.n_hidden);
        let mut fan_in = config.input_dim;
        for _ in 0..config.n_hidden {
            hidden.push(Dense::new(fan_in, config.hidden_dim, rng));
            fan_in = config.hidden_dim;
        }
        let embeddings = (0..config.n_hidden)
            .map(|_| Tensor2::filled(config.steps, config.hidden_dim, 1.0))
            .collect();
        let output = Dense::new(config.hidden_dim, config.input_dim, rng);
        Ok(Self {
            hidden,
            embeddings,
            output,
            embedding_mode: config.embedding,
        })
    }

    pub(crate) fn from_parts(
        hidden: Vec<Dense>,
        embeddings: Vec<Tensor2>,
        output: Dense,
        embedding_mode: EmbeddingMode,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.len() != embeddings.len() {
            return Err(Error::Format("hidden layers and embedding tables disagree".into()));
        }
        let steps = embeddings[0].rows();
        for (i, (layer, table)) in hidden.iter().zip(&embeddings).enumerate() {
            if i > 0 && layer.fan_in() != hidden[i - 1].fan_out() {
                return Err(Error::Format(format!("layer {i} fan-in mismatch")));
            }
            if table.rows() != steps || table.cols() != layer.fan_out() {
                return Err(Error::Format(format!("embedding table {i} has wrong shape")));
            }
        }
        let last = hidden.last().map(Dense::fan_out).unwrap_or(0);
        if output.fan_in() != last || output.fan_out() != hidden[0].fan_in() {
            return Err(Error::Format("output layer shape mismatch".into()));
        }
        Ok(Self {
            hidden,
            embeddings,
            output,
            embedding_mode,
        })
    }

    pub fn config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.input_dim(),
            hidden_dim: self.hidden[0].fan_out(),
            n_hidden: self.hidden.len(),
            steps: self.steps(),
            embedding: self.embedding_mode,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].fan_in()
    }

    pub fn steps(&self) -> usize {
        self.embeddings[0].rows()
    }

    pub fn embedding_mode(&self) -> EmbeddingMode {
        self.embedding_mode
    }

    pub fn hidden_layers(&self) -> &[Dense] {
        &self.hidden
    }

    pub fn hidden_layers_mut(&mut self) -> &mut [Dense] {
        &mut self.hidden
    }

    pub fn embeddings(&self) -> &[Tensor2] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [Tensor2] {
        &mut self.embeddings
    }

    pub fn output_layer(&self) -> &Dense {
        &self.output
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        &mut self.output
    }

    fn check_inputs(&self, x: &Tensor2, steps: &[usize]) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "ConditionalMlp::forward",
                left: x.shape(),
                right: (x.rows(), self.input_dim()),
            });
        }
        if steps.len() != x.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} time-steps for {} rows",
                steps.len(),
                x.rows()
            )));
        }
        let max = self.steps();
        if let Some(&t) = steps.iter().find(|&&t| t == 0 || t > max) {
            return Err(Error::StepOutOfRange { t, max });
        }
        Ok(())
    }

    /// Predicted noise for each row of `x`, row `i` conditioned on `steps[i]`.
    pub fn forward(&self, x: &Tensor2, steps: &[usize]) -> Result<Tensor2> {
        Ok(self.forward_with_cache(x, steps)?.0)
    }

    pub fn forward_with_cache(
        &self,
        x: &Tensor2,
        steps: &[usize],
    ) -> Result<(Tensor2, ForwardCache)> {
        self.check_inputs(x, steps)?;
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        for (layer, table) in self.hidden.iter().zip(&self.embeddings) {
            let affine = layer.forward(&h)?;
            let mut inner = affine.clone();
            let mut gate = affine.clone();
            let mut out = affine.clone();
            for (r, &t) in steps.iter().enumerate() {
                let e = table.row(t - 1);
                let a = affine.row(r);
                let (inner_row, gate_row, out_row) = (inner.row_mut(r), gate.row_mut(r), out.row_mut(r));
                for j in 0..e.len() {
                    let arg = match self.embedding_mode {
                        EmbeddingMode::Pre => a[j] * e[j],
                        EmbeddingMode::Post => a[j],
                    };
                    let (sp, sg) = softplus_and_sigmoid(arg);
                    gate_row[j] = sg;
                    match self.embedding_mode {
                        EmbeddingMode::Pre => {
                            inner_row[j] = arg;
                            out_row[j] = sp;
                        }
                        EmbeddingMode::Post => {
                            inner_row[j] = sp;
                            out_row[j] = sp * e[j];
                        }
                    }
                }
            }
            layers.push(LayerCache {
                input: std::mem::replace(&mut h, out),
                affine,
                inner,
                gate,
            });
        }
        let y = self.output.forward(&h)?;
        Ok((
            y,
            ForwardCache {
                steps: steps.to_vec(),
                layers,
                last_hidden: h,
            },
        ))
    }

    /// Reverse-mode gradients of `sum(forward(x, t) * upstream)`.
    pub fn backward(&self, x: &Tensor2, steps: &[usize], upstream: &Tensor2) -> Result<Gradients> {
        let (_, cache) = self.forward_with_cache(x, steps)?;
        self.backward_from_cache(&cache, upstream)
    }

    pub fn backward_from_cache(&self, cache: &ForwardCache, upstream: &Tensor2) -> Result<Gradients> {
        if upstream.shape() != (cache.last_hidden.rows(), self.input_dim()) {
            return Err(Error::ShapeMismatch {
                op: "ConditionalMlp::backward",
                left: upstream.shape(),
                right: (cache.last_hidden.rows(), self.input_dim()),
            });
        }
        let out_grads = self.output.backward(&cache.last_hidden, upstream)?;
        let mut d_h = out_grads.input;
        let n = self.hidden.len();
        let mut per_layer: Vec<(Tensor2, Tensor2, Tensor2)> = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let lc = &cache.layers[l];
            let table = &self.embeddings[l];
            let mut d_table = Tensor2::zeros(table.rows(), table.cols());
            let mut d_affine = Tensor2::zeros(lc.affine.rows(), lc.affine.cols());
            for (r, &t) in cache.steps.iter().enumerate() {
                let e = table.row(t - 1);
                let a = lc.affine.row(r);
                let inner = lc.inner.row(r);
                let gate = lc.gate.row(r);
                let dh = d_h.row(r);
                let d_e = d_table.row_mut(t - 1);
                let d_a = d_affine.row_mut(r);
                for j in 0..e.len() {
                    match self.embedding_mode {
                        EmbeddingMode::Pre => {
                            let dm = dh[j] * gate[j];
                            d_a[j] = dm * e[j];
                            d_e[j] += dm * a[j];
                        }
                        EmbeddingMode::Post => {
                            d_e[j] += dh[j] * inner[j];
                            d_a[j] = dh[j] * e[j] * gate[j];
                        }
                    }
                }
            }
            let g = self.hidden[l].backward(&lc.input, &d_affine)?;
            per_layer.push((g.weight, g.bias, d_table));
            d_h = g.input;
        }
        per_layer.reverse();
        let mut tensors = Vec::with_capacity(3 * n + 2);
        for (w, b, e) in per_layer {
            tensors.push(w);
            tensors.push(b);
            tensors.push(e);
        }
        tensors.push(out_grads.weight);
        tensors.push(out_grads.bias);
        Ok(Gradients(tensors))
    }
}

impl Parameterized for ConditionalMlp {
    fn parameters(&self) -> Vec<&Tensor2> {
        let mut v = Vec::with_capacity(3 * self.hidden.len() + 2);
        for (layer, table) in self.hidden.iter().zip(&self.embeddings) {
            v.push(&layer.weight);
            v.push(&layer.bias);
            v.push(table);
        }
        v.push(&self.output.weight);
        v.push(&self.output.bias);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut v = Vec::with_capacity(3 * self.hidden.len() + 2);
        for (layer, table) in self.hidden.iter_mut().zip(self.embeddings.iter_mut()) {
            v.push(&mut layer.weight);
            v.push(&mut layer.bias);
            v.push(table);
        }
        v.push(&mut self.output.weight);
        v.push(&mut self.output.bias);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_standard_normal;

    fn small(mode: EmbeddingMode, rng: &mut RngStream) -> ConditionalMlp {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden_dim: 5,
            n_hidden: 2,
            steps: 4,
            embedding: mode,
        };
        ConditionalMlp::new(&cfg, rng).unwrap()
    }

    #[test]
    fn output_shape_matches_input() {
        let mut rng = RngStream::new(1);
        let m = ConditionalMlp::new(&MlpConfig::default(), &mut rng).unwrap();
        let x = sample_standard_normal(&mut rng, 7, 2);
        let y = m.forward(&x, &[1, 2, 3, 50, 99, 100, 7]).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn all_ones_embeddings_make_output_time_agnostic() {
        let mut rng = RngStream::new(2);
        let m = small(EmbeddingMode::Pre, &mut rng);
        let row = sample_standard_normal(&mut rng, 1, 2);
        let x = row.select_rows(&[0, 0, 0, 0]);
        let y = m.forward(&x, &[1, 2, 3, 4]).unwrap();
        for r in 1..4 {
            assert_eq!(y.row(r), y.row(0));
        }
    }

    #[test]
    fn different_steps_change_output_once_embeddings_differ() {
        let mut rng = RngStream::new(3);
        for mode in [EmbeddingMode::Pre, EmbeddingMode::Post] {
            let mut m = small(mode, &mut rng);
            for table in m.embeddings_mut() {
                *table = sample_standard_normal(&mut rng, table.rows(), table.cols());
            }
            let row = sample_standard_normal(&mut rng, 1, 2);
            let y = m.forward(&row.select_rows(&[0, 0]), &[1, 3]).unwrap();
            assert_ne!(y.row(0), y.row(1));
        }
    }

    #[test]
    fn zero_input_micro_network_hand_computed() {
        // One hidden layer, zero input and biases: every hidden unit is
        // softplus(0) * 1 = ln 2, so the output is ln2 * column sums of W_out + b_out.
        let mut rng = RngStream::new(4);
        let cfg = MlpConfig {
            input_dim: 2,
            hidden_dim: 3,
            n_hidden: 1,
            steps: 2,
            embedding: EmbeddingMode::Post,
        };
        let mut m = ConditionalMlp::new(&cfg, &mut rng).unwrap();
        m.output.weight = Tensor2::from_vec(3, 2, vec![1.0, -2.0, 0.5, 0.25, 3.0, 1.0]).unwrap();
        m.output.bias = Tensor2::from_vec(1, 2, vec![0.1, -0.1]).unwrap();
        m.embeddings[0] = Tensor2::from_vec(2, 3, vec![1.0, 1.0, 1.0, 2.0, 0.0, -1.0]).unwrap();
        let x = Tensor2::zeros(2, 2);
        let y = m.forward(&x, &[1, 2]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        // t = 1: hidden (ln2, ln2, ln2)
        assert!((y.get(0, 0) - (ln2 * 4.5 + 0.1)).abs() < 1e-14);
        assert!((y.get(0, 1) - (ln2 * -0.75 - 0.1)).abs() < 1e-14);
        // t = 2: hidden (2 ln2, 0, -ln2)
        assert!((y.get(1, 0) - (ln2 * (2.0 - 3.0) + 0.1)).abs() < 1e-14);
        assert!((y.get(1, 1) - (ln2 * (-4.0 - 1.0) - 0.1)).abs() < 1e-14);

        // In pre mode the embedding multiplies a zero pre-activation, so every
        // hidden unit is ln 2 regardless of t.
        m.embedding_mode = EmbeddingMode::Pre;
        let y = m.forward(&x, &[1, 2]).unwrap();
        assert!((y.get(1, 0) - (ln2 * 4.5 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn step_out_of_range_rejected() {
        let mut rng = RngStream::new(5);
        let m = small(EmbeddingMode::Pre, &mut rng);
        let x = Tensor2::zeros(1, 2);
        assert!(matches!(m.forward(&x, &[0]), Err(Error::StepOutOfRange { t: 0, .. })));
        assert!(matches!(m.forward(&x, &[5]), Err(Error::StepOutOfRange { t: 5, max: 4 })));
        assert!(m.forward(&Tensor2::zeros(1, 3), &[1]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = RngStream::new(6);
        let m = small(EmbeddingMode::Pre, &mut rng);
        let x = sample_standard_normal(&mut rng, 3, 2);
        let g = m.backward(&x, &[1, 2, 2], &Tensor2::zeros(3, 2)).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn unused_embedding_rows_get_zero_gradient() {
        let mut rng = RngStream::new(7);
        let m = small(EmbeddingMode::Pre, &mut rng);
        let x = sample_standard_normal(&mut rng, 3, 2);
        let up = sample_standard_normal(&mut rng, 3, 2);
        let g = m.backward(&x, &[2, 2, 4], &up).unwrap();
        for l in 0..2 {
            let table = &g.tensors()[3 * l + 2];
            assert!(table.row(0).iter().all(|&v| v == 0.0));
            assert!(table.row(2).iter().all(|&v| v == 0.0));
            assert!(table.row(1).iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn hidden_activations_are_positive_before_scaling() {
        let mut rng = RngStream::new(8);
        let m = small(EmbeddingMode::Post, &mut rng);
        let x = sample_standard_normal(&mut rng, 20, 2).scale(30.0);
        let (_, cache) = m.forward_with_cache(&x, &[1; 20]).unwrap();
        for layer in &cache.layers {
            assert!(layer.inner.data().iter().all(|&v| v >= 0.0));
        }
    }
}

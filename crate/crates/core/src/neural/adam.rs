use serde::{Deserialize, Serialize};

use super::dense::{Gradients, Parameterized};
use crate::error::Result;
use crate::numerics::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &impl Parameterized) -> Self {
        let zeros: Vec<Tensor2> = model
            .parameters()
            .iter()
            .map(|p| Tensor2::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut impl Parameterized, grads: &Gradients) -> Result<()> {
        grads.ensure_matches(model)?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((param, g), m), v) in model
            .parameters_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for (((p, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Toy(Tensor2);

    impl Parameterized for Toy {
        fn parameters(&self) -> Vec<&Tensor2> {
            vec![&self.0]
        }
        fn parameters_mut(&mut self) -> Vec<&mut Tensor2> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut toy = Toy(Tensor2::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let before = toy.clone();
        let mut adam = Adam::new(AdamConfig::default(), &toy);
        let zeros = Gradients::zeros_like(&toy);
        adam.step(&mut toy, &zeros).unwrap();
        assert_eq!(toy.0, before.0);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        for scale in [1e-4, 1.0, 1e4] {
            let mut toy = Toy(Tensor2::zeros(1, 3));
            let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &toy);
            let g = Tensor2::from_vec(1, 3, vec![scale, -2.0 * scale, 0.3 * scale]).unwrap();
            adam.step(&mut toy, &Gradients(vec![g.clone()])).unwrap();
            for (p, gv) in toy.0.data().iter().zip(g.data()) {
                assert!((p.abs() - 1e-3).abs() < 1e-6, "{p}");
                assert_eq!(p.signum(), -gv.signum());
            }
        }
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut toy = Toy(Tensor2::zeros(1, 1));
        let mut adam = Adam::new(AdamConfig::default(), &toy);
        let g = Gradients(vec![Tensor2::filled(1, 1, 0.7)]);
        let mut last = 0.0;
        for _ in 0..100 {
            adam.step(&mut toy, &g).unwrap();
            let now = toy.0.get(0, 0);
            assert!(now < last);
            last = now;
        }
        assert_eq!(adam.steps_taken(), 100);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut toy = Toy(Tensor2::zeros(1, 2));
        let mut adam = Adam::new(AdamConfig::default(), &toy);
        assert!(adam.step(&mut toy, &Gradients(vec![Tensor2::zeros(2, 1)])).is_err());
        assert!(adam.step(&mut toy, &Gradients(vec![])).is_err());
    }
}

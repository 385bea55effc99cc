//! Central finite-difference verification of analytic gradients.

use super::dense::{Gradients, Parameterized};
use crate::error::Result;
use crate::numerics::RngStream;

/// Denominator floor for the relative error, so that probes whose true
/// gradient is (numerically) zero are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_relative_error: f64,
    /// `(tensor index, element index)` of the worst probe.
    pub worst: (usize, usize),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against `(L(θ + h) - L(θ - h)) / 2h` at `probes`
/// randomly chosen parameter entries (tensor first, then element).
pub fn check_gradients<M, F>(
    model: &M,
    analytic: &Gradients,
    loss: F,
    probes: usize,
    h: f64,
    rng: &mut RngStream,
) -> Result<GradCheckReport>
where
    M: Parameterized + Clone,
    F: Fn(&M) -> Result<f64>,
{
    analytic.ensure_matches(model)?;
    let n_tensors = analytic.tensors().len();
    let mut probe_model = model.clone();
    let mut report = GradCheckReport {
        probes,
        max_relative_error: 0.0,
        worst: (0, 0),
    };
    for _ in 0..probes {
        let ti = rng.index(n_tensors);
        let ei = rng.index(analytic.tensors()[ti].len());
        let original = probe_model.parameters()[ti].data()[ei];

        probe_model.parameters_mut()[ti].data_mut()[ei] = original + h;
        let plus = loss(&probe_model)?;
        probe_model.parameters_mut()[ti].data_mut()[ei] = original - h;
        let minus = loss(&probe_model)?;
        probe_model.parameters_mut()[ti].data_mut()[ei] = original;

        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic.tensors()[ti].data()[ei], numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = (ti, ei);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ConditionalMlp, EmbeddingMode, MlpConfig};
    use crate::numerics::{sample_standard_normal, Tensor2};

    fn linear_loss(m: &ConditionalMlp, x: &Tensor2, t: &[usize], r: &Tensor2) -> Result<f64> {
        let y = m.forward(x, t)?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    }

    #[test]
    fn conditional_mlp_gradients_match_finite_differences() {
        for mode in [EmbeddingMode::Pre, EmbeddingMode::Post] {
            let mut rng = RngStream::new(31);
            let cfg = MlpConfig {
                input_dim: 2,
                hidden_dim: 6,
                n_hidden: 3,
                steps: 5,
                embedding: mode,
            };
            let mut m = ConditionalMlp::new(&cfg, &mut rng).unwrap();
            for table in m.embeddings_mut() {
                *table = sample_standard_normal(&mut rng, table.rows(), table.cols()).map(|v| 1.0 + 0.5 * v);
            }
            let x = sample_standard_normal(&mut rng, 6, 2);
            let t = [1, 2, 3, 4, 5, 3];
            let r = sample_standard_normal(&mut rng, 6, 2);
            let g = m.backward(&x, &t, &r).unwrap();
            let report =
                check_gradients(&m, &g, |mm| linear_loss(mm, &x, &t, &r), 300, 1e-5, &mut rng).unwrap();
            assert!(report.max_relative_error < 1e-4, "{mode:?}: {report:?}");
        }
    }

    #[test]
    fn detects_wrong_gradients() {
        let mut rng = RngStream::new(32);
        let cfg = MlpConfig {
            hidden_dim: 4,
            n_hidden: 1,
            steps: 2,
            ..MlpConfig::default()
        };
        let m = ConditionalMlp::new(&cfg, &mut rng).unwrap();
        let x = sample_standard_normal(&mut rng, 3, 2);
        let t = [1, 2, 1];
        let r = sample_standard_normal(&mut rng, 3, 2);
        let mut g = m.backward(&x, &t, &r).unwrap();
        g.0.iter_mut().for_each(|tensor| tensor.scale_in_place(1.1));
        let report = check_gradients(&m, &g, |mm| linear_loss(mm, &x, &t, &r), 50, 1e-5, &mut rng).unwrap();
        assert!(report.max_relative_error > 0.05);
    }
}

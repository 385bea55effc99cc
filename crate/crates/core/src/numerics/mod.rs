//! Random streams and dense matrices shared by every other module.

mod rng;
mod tensor;

pub use rng::RngStream;
pub use tensor::Tensor2;

use crate::error::{Error, Result};

/// I.i.d. `N(0, 1)` entries.
pub fn sample_standard_normal(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// I.i.d. zero-mean Laplace entries with the requested variance.
pub fn sample_laplace(
    rng: &mut RngStream,
    target_variance: f64,
    rows: usize,
    cols: usize,
) -> Result<Tensor2> {
    if !(target_variance >= 0.0) || !target_variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Laplace variance must be finite and non-negative, got {target_variance}"
        )));
    }
    if target_variance == 0.0 {
        return Ok(Tensor2::zeros(rows, cols));
    }
    let b = (target_variance / 2.0).sqrt();
    Ok(Tensor2::from_fn(rows, cols, |_, _| rng.laplace(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(t: &Tensor2) -> (f64, f64, f64) {
        let n = t.len() as f64;
        let mean = t.mean();
        let m2 = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m4 = t.data().iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        (mean, m2, m4 / (m2 * m2) - 3.0)
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = RngStream::new(2024);
        let t = sample_standard_normal(&mut rng, 1_000_000, 1);
        let (mean, var, kurt) = moments(&t);
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
        assert!(kurt.abs() < 0.05, "excess kurtosis {kurt}");
    }

    #[test]
    fn standard_normal_is_deterministic_and_advances() {
        let a = sample_standard_normal(&mut RngStream::new(8), 4, 3);
        let b = sample_standard_normal(&mut RngStream::new(8), 4, 3);
        assert_eq!(a, b);
        let mut rng = RngStream::new(8);
        let x = sample_standard_normal(&mut rng, 1, 1);
        let y = sample_standard_normal(&mut rng, 1, 1);
        assert_ne!(x, y);
    }

    #[test]
    fn laplace_zero_variance_is_all_zero() {
        let t = sample_laplace(&mut RngStream::new(1), 0.0, 3, 5).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplace_variance_and_kurtosis() {
        let mut rng = RngStream::new(77);
        let t = sample_laplace(&mut rng, 1.0, 1_000_000, 1).unwrap();
        let (mean, var, kurt) = moments(&t);
        assert!(mean.abs() < 0.01);
        assert!((0.98..=1.02).contains(&var), "var {var}");
        assert!((2.7..=3.3).contains(&kurt), "excess kurtosis {kurt}");
    }

    #[test]
    fn laplace_rejects_negative_variance() {
        assert!(sample_laplace(&mut RngStream::new(1), -1.0, 1, 1).is_err());
    }
}

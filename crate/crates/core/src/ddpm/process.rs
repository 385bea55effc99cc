//! Closed-form pieces of the forward and reverse diffusion processes.

use super::NoiseSchedule;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Mean and variance of `q(x_{t-1} | x_t, x_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mean: Tensor2,
    pub variance: f64,
}

/// One forward step: `sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps`.
pub fn forward_step(x_prev: &Tensor2, t: usize, sched: &NoiseSchedule, eps: &Tensor2) -> Result<Tensor2> {
    sched.check_step(t)?;
    let beta = sched.beta(t);
    x_prev.lin_comb((1.0 - beta).sqrt(), eps, beta.sqrt())
}

/// Jump straight to step `t`: `sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_jump(x0: &Tensor2, t: usize, sched: &NoiseSchedule, eps: &Tensor2) -> Result<Tensor2> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    x0.lin_comb(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

/// Row-wise [`forward_jump`] where row `i` uses step `steps[i]`.
pub fn forward_jump_rows(
    x0: &Tensor2,
    steps: &[usize],
    sched: &NoiseSchedule,
    eps: &Tensor2,
) -> Result<Tensor2> {
    x0.ensure_same_shape(eps, "forward_jump_rows")?;
    if steps.len() != x0.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} time-steps for {} rows",
            steps.len(),
            x0.rows()
        )));
    }
    let mut out = x0.clone();
    for (r, &t) in steps.iter().enumerate() {
        sched.check_step(t)?;
        let ab = sched.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for (o, &e) in out.row_mut(r).iter_mut().zip(eps.row(r)) {
            *o = a * *o + b * e;
        }
    }
    Ok(out)
}

/// Coefficients `(c_xt, c_x0)` of the posterior mean `c_xt x_t + c_x0 x_0`.
pub fn posterior_coefficients(t: usize, sched: &NoiseSchedule) -> (f64, f64) {
    let ab = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t - 1);
    let denom = 1.0 - ab;
    (
        sched.alpha(t).sqrt() * (1.0 - ab_prev) / denom,
        ab_prev.sqrt() * sched.beta(t) / denom,
    )
}

pub fn posterior(x_t: &Tensor2, x0: &Tensor2, t: usize, sched: &NoiseSchedule) -> Result<PosteriorStats> {
    sched.check_step(t)?;
    let (c_xt, c_x0) = posterior_coefficients(t, sched);
    Ok(PosteriorStats {
        mean: x_t.lin_comb(c_xt, x0, c_x0)?,
        variance: sched.posterior_variance(t),
    })
}

/// `(x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)`.
pub fn predict_x0(x_t: &Tensor2, t: usize, eps_hat: &Tensor2, sched: &NoiseSchedule) -> Result<Tensor2> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / ab.sqrt();
    x_t.lin_comb(inv, eps_hat, -(1.0 - ab).sqrt() * inv)
}

/// Coefficients `(c_x, c_eps)` of the reverse-step mean
/// `(x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t)`.
pub fn reverse_coefficients(t: usize, sched: &NoiseSchedule) -> (f64, f64) {
    let alpha = sched.alpha(t);
    let c_x = 1.0 / alpha.sqrt();
    (c_x, -c_x * (1.0 - alpha) / (1.0 - sched.alpha_bar(t)).sqrt())
}

/// Mean of the learned reverse step given a noise estimate.
pub fn reverse_mean(x_t: &Tensor2, eps_hat: &Tensor2, t: usize, sched: &NoiseSchedule) -> Result<Tensor2> {
    sched.check_step(t)?;
    let (c_x, c_eps) = reverse_coefficients(t, sched);
    x_t.lin_comb(c_x, eps_hat, c_eps)
}

/// Sum of squared errors per row, averaged over rows.
pub fn noise_prediction_loss(eps: &Tensor2, eps_hat: &Tensor2) -> Result<f64> {
    eps.ensure_same_shape(eps_hat, "noise_prediction_loss")?;
    let sse: f64 = eps
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / eps.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::make_schedule;
    use super::*;
    use crate::numerics::{sample_standard_normal, RngStream};

    fn sched() -> NoiseSchedule {
        make_schedule(100, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn zero_noise_cases() {
        let s = sched();
        let x = Tensor2::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let z = Tensor2::zeros(1, 2);
        let step = forward_step(&x, 10, &s, &z).unwrap();
        let jump = forward_jump(&x, 10, &s, &z).unwrap();
        for c in 0..2 {
            assert_eq!(step.get(0, c), (1.0 - s.beta(10)).sqrt() * x.get(0, c));
            assert_eq!(jump.get(0, c), s.alpha_bar(10).sqrt() * x.get(0, c));
        }
        let p = predict_x0(&x, 10, &z, &s).unwrap();
        assert!((p.get(0, 0) - x.get(0, 0) / s.alpha_bar(10).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shape_and_step_errors() {
        let s = sched();
        let x = Tensor2::zeros(2, 2);
        assert!(forward_step(&x, 1, &s, &Tensor2::zeros(2, 3)).is_err());
        assert!(forward_jump(&x, 0, &s, &x).is_err());
        assert!(forward_jump(&x, 101, &s, &x).is_err());
        assert!(posterior(&x, &x, 0, &s).is_err());
    }

    #[test]
    fn posterior_at_first_step_is_deterministic_x0() {
        let s = sched();
        let mut rng = RngStream::new(1);
        let xt = sample_standard_normal(&mut rng, 4, 2);
        let x0 = sample_standard_normal(&mut rng, 4, 2);
        let p = posterior(&xt, &x0, 1, &s).unwrap();
        assert_eq!(p.variance, 0.0);
        for (a, b) in p.mean.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = Tensor2::zeros(4, 2);
        assert!(posterior(&zero, &zero, 40, &s).unwrap().mean.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_x0_inverts_forward_jump() {
        let s = sched();
        let mut rng = RngStream::new(2);
        let x0 = sample_standard_normal(&mut rng, 50, 2);
        let eps = sample_standard_normal(&mut rng, 50, 2);
        for t in [1, 13, 50, 100] {
            let xt = forward_jump(&x0, t, &s, &eps).unwrap();
            let back = predict_x0(&xt, t, &eps, &s).unwrap();
            for (a, b) in back.data().iter().zip(x0.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn predict_x0_at_first_step_is_nearly_identity() {
        let s = sched();
        let mut rng = RngStream::new(3);
        let xt = sample_standard_normal(&mut rng, 100, 2).map(|v| v + 3.0);
        let eps = Tensor2::zeros(100, 2);
        let x0 = predict_x0(&xt, 1, &eps, &s).unwrap();
        for (a, b) in x0.data().iter().zip(xt.data()) {
            assert!(((a - b) / b).abs() < 1e-3);
        }
    }

    #[test]
    fn row_wise_jump_matches_scalar_jump() {
        let s = sched();
        let mut rng = RngStream::new(4);
        let x0 = sample_standard_normal(&mut rng, 3, 2);
        let eps = sample_standard_normal(&mut rng, 3, 2);
        let rows = forward_jump_rows(&x0, &[5, 5, 5], &s, &eps).unwrap();
        assert_eq!(rows, forward_jump(&x0, 5, &s, &eps).unwrap());
        assert!(forward_jump_rows(&x0, &[5, 5], &s, &eps).is_err());
    }

    #[test]
    fn loss_of_perfect_prediction_is_zero() {
        let mut rng = RngStream::new(5);
        let eps = sample_standard_normal(&mut rng, 10, 2);
        assert_eq!(noise_prediction_loss(&eps, &eps).unwrap(), 0.0);
        let z = Tensor2::zeros(10, 2);
        let l = noise_prediction_loss(&eps, &z).unwrap();
        assert!((l - eps.data().iter().map(|v| v * v).sum::<f64>() / 10.0).abs() < 1e-12);
    }
}

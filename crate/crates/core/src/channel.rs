//! Hardware-impaired transmission.
//!
//! Per symbol, `y_k = h_k (sqrt(p) s_k + eta_t_k) + eta_r_k + n_k` with
//! transmitter distortion `eta_t ~ CN(0, kappa_t p)`, receiver distortion
//! `eta_r ~ CN(0, kappa_r p |h_k|^2)` and receiver noise of total variance
//! `delta^2` per complex dimension. Conditional on `h`, the lumped
//! noise-plus-distortion `zeta = y - sqrt(p) h s` has diagonal covariance
//! `Sigma = p (kappa_t + kappa_r) |h|^2 + delta^2`, and its stacked real form
//! has covariance `C = 1/2 [Re Sigma, -Im Sigma; Im Sigma, Re Sigma]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    #[default]
    None,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Laplacian,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Laplacian => "laplacian",
        }
    }
}

impl Fading {
    pub fn as_str(self) -> &'static str {
        match self {
            Fading::None => "none",
            Fading::Rayleigh => "rayleigh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Transmit power `p`.
    pub power: f64,
    pub kappa_t: f64,
    pub kappa_r: f64,
    /// Receiver noise variance `delta^2` per complex dimension.
    pub noise_variance: f64,
    pub fading: Fading,
    pub noise_kind: NoiseKind,
    /// Consecutive symbols sharing one fading gain.
    pub coherence_block: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            power: 1.0,
            kappa_t: 0.05,
            kappa_r: 0.15,
            noise_variance: 1.0,
            fading: Fading::None,
            noise_kind: NoiseKind::Gaussian,
            coherence_block: 1,
        }
    }
}

impl ChannelConfig {
    /// Noise variance from transmit SNR `10 log10(p / delta^2)`.
    pub fn noise_variance_for_snr(power: f64, snr_db: f64) -> f64 {
        power / 10f64.powf(snr_db / 10.0)
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_variance = Self::noise_variance_for_snr(self.power, snr_db);
        self
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power / self.noise_variance).log10()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.power > 0.0
            && self.power.is_finite()
            && self.kappa_t >= 0.0
            && self.kappa_r >= 0.0
            && self.noise_variance >= 0.0
            && self.kappa_t.is_finite()
            && self.kappa_r.is_finite()
            && self.noise_variance.is_finite()
            && self.coherence_block >= 1;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid channel config: {self:?}")));
        }
        Ok(())
    }
}

/// One realization of every random quantity in a transmitted batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub h: Vec<Complex64>,
    pub eta_t: Vec<Complex64>,
    pub eta_r: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl ChannelDraw {
    /// `zeta_k = h_k eta_t_k + eta_r_k + n_k`.
    pub fn effective_noise(&self) -> Vec<Complex64> {
        self.h
            .iter()
            .zip(&self.eta_t)
            .zip(&self.eta_r)
            .zip(&self.noise)
            .map(|(((h, et), er), n)| h * et + er + n)
            .collect()
    }
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
pub fn complex_normal(rng: &mut RngStream, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * rng.standard_normal(), s * rng.standard_normal())
}

/// Complex Laplacian: independent Laplace real and imaginary parts, each
/// with variance `variance / 2`.
pub fn complex_laplace(rng: &mut RngStream, variance: f64) -> Complex64 {
    let b = (variance / 4.0).sqrt();
    Complex64::new(rng.laplace(b), rng.laplace(b))
}

/// Per-symbol gains: all ones without fading, `CN(0, 1)` per coherence block
/// under Rayleigh fading.
pub fn draw_channel(cfg: &ChannelConfig, k: usize, rng: &mut RngStream) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    Ok(match cfg.fading {
        Fading::None => vec![Complex64::new(1.0, 0.0); k],
        Fading::Rayleigh => {
            let mut h = Vec::with_capacity(k);
            while h.len() < k {
                let g = complex_normal(rng, 1.0);
                let n = cfg.coherence_block.min(k - h.len());
                h.extend(std::iter::repeat(g).take(n));
            }
            h
        }
    })
}

pub fn transmit(
    s: &[Complex64],
    cfg: &ChannelConfig,
    h: &[Complex64],
    rng: &mut RngStream,
) -> Result<ChannelDraw> {
    cfg.validate()?;
    if s.len() != h.len() {
        return Err(Error::InvalidArgument(format!(
            "{} symbols but {} channel gains",
            s.len(),
            h.len()
        )));
    }
    let p = cfg.power;
    let sqrt_p = p.sqrt();
    let k = s.len();
    let mut draw = ChannelDraw {
        h: h.to_vec(),
        eta_t: Vec::with_capacity(k),
        eta_r: Vec::with_capacity(k),
        noise: Vec::with_capacity(k),
        y: Vec::with_capacity(k),
    };
    for (&sk, &hk) in s.iter().zip(h) {
        let et = complex_normal(rng, cfg.kappa_t * p);
        let er = complex_normal(rng, cfg.kappa_r * p * hk.norm_sqr());
        let n = match cfg.noise_kind {
            NoiseKind::Gaussian => complex_normal(rng, cfg.noise_variance),
            NoiseKind::Laplacian => complex_laplace(rng, cfg.noise_variance),
        };
        draw.y.push(hk * (sqrt_p * sk + et) + er + n);
        draw.eta_t.push(et);
        draw.eta_r.push(er);
        draw.noise.push(n);
    }
    Ok(draw)
}

/// Diagonal of `Sigma = p (kappa_t + kappa_r) G + delta^2 I`.
pub fn noise_covariance_diagonal(h: &[Complex64], cfg: &ChannelConfig) -> Vec<f64> {
    h.iter()
        .map(|hk| cfg.power * (cfg.kappa_t + cfg.kappa_r) * hk.norm_sqr() + cfg.noise_variance)
        .collect()
}

/// `2K x 2K` covariance of the stacked real noise vector.
pub fn real_noise_covariance(h: &[Complex64], cfg: &ChannelConfig) -> Tensor2 {
    let k = h.len();
    let sigma = noise_covariance_diagonal(h, cfg);
    // Sigma is real and diagonal, so the off-diagonal blocks vanish.
    let mut c = Tensor2::zeros(2 * k, 2 * k);
    for (i, s) in sigma.iter().enumerate() {
        c.set(i, i, s / 2.0);
        c.set(k + i, k + i, s / 2.0);
    }
    c
}

/// Complex batch stacked as `[Re(z); Im(z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealBatch(Vec<f64>);

impl RealBatch {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "stacked batch must have even length, got {}",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Number of complex entries `K`.
    pub fn complex_len(&self) -> usize {
        self.0.len() / 2
    }

    /// `K x 2` tensor with row `k` holding `(Re z_k, Im z_k)`.
    pub fn to_pairs(&self) -> Tensor2 {
        let k = self.complex_len();
        Tensor2::from_fn(k, 2, |r, c| self.0[c * k + r])
    }

    pub fn from_pairs(pairs: &Tensor2) -> Result<Self> {
        if pairs.cols() != 2 {
            return Err(Error::ShapeMismatch {
                op: "RealBatch::from_pairs",
                left: pairs.shape(),
                right: (pairs.rows(), 2),
            });
        }
        let k = pairs.rows();
        let mut v = vec![0.0; 2 * k];
        for r in 0..k {
            v[r] = pairs.get(r, 0);
            v[k + r] = pairs.get(r, 1);
        }
        Ok(Self(v))
    }
}

pub fn stack_real(z: &[Complex64]) -> RealBatch {
    let mut v: Vec<f64> = z.iter().map(|c| c.re).collect();
    v.extend(z.iter().map(|c| c.im));
    RealBatch(v)
}

pub fn unstack(batch: &RealBatch) -> Vec<Complex64> {
    let k = batch.complex_len();
    (0..k).map(|i| Complex64::new(batch.0[i], batch.0[k + i])).collect()
}

/// Row-per-symbol `(Re, Im)` tensor of a complex batch.
pub fn complex_to_pairs(z: &[Complex64]) -> Tensor2 {
    Tensor2::from_fn(z.len(), 2, |r, c| if c == 0 { z[r].re } else { z[r].im })
}

pub fn pairs_to_complex(pairs: &Tensor2) -> Result<Vec<Complex64>> {
    Ok(unstack(&RealBatch::from_pairs(pairs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quiet() -> ChannelConfig {
        ChannelConfig {
            kappa_t: 0.0,
            kappa_r: 0.0,
            noise_variance: 0.0,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn no_fading_is_all_ones() {
        let h = draw_channel(&quiet(), 4, &mut RngStream::new(1)).unwrap();
        assert_eq!(h, vec![Complex64::new(1.0, 0.0); 4]);
        assert!(draw_channel(&quiet(), 0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn rayleigh_gain_has_unit_power() {
        let cfg = ChannelConfig {
            fading: Fading::Rayleigh,
            ..quiet()
        };
        let h = draw_channel(&cfg, 1_000_000, &mut RngStream::new(2)).unwrap();
        let p = h.iter().map(|g| g.norm_sqr()).sum::<f64>() / h.len() as f64;
        assert!((0.99..=1.01).contains(&p), "{p}");
    }

    #[test]
    fn rayleigh_magnitude_matches_cdf() {
        // KS distance to the Rayleigh(1/sqrt 2) CDF 1 - exp(-r^2).
        let cfg = ChannelConfig {
            fading: Fading::Rayleigh,
            ..quiet()
        };
        let mut mags: Vec<f64> = draw_channel(&cfg, 100_000, &mut RngStream::new(3))
            .unwrap()
            .iter()
            .map(|g| g.norm())
            .collect();
        mags.sort_by(f64::total_cmp);
        let n = mags.len() as f64;
        let ks = mags
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = 1.0 - (-r * r).exp();
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn coherence_blocks_share_gains() {
        let cfg = ChannelConfig {
            fading: Fading::Rayleigh,
            coherence_block: 3,
            ..quiet()
        };
        let h = draw_channel(&cfg, 7, &mut RngStream::new(4)).unwrap();
        assert_eq!(h[0], h[2]);
        assert_ne!(h[2], h[3]);
        assert_eq!(h[3], h[5]);
        assert_eq!(h.len(), 7);
    }

    #[test]
    fn noiseless_identity() {
        let cfg = ChannelConfig { power: 2.5, ..quiet() };
        let s = vec![Complex64::new(0.3, -0.1), Complex64::new(-1.0, 0.7)];
        let h = draw_channel(&cfg, 2, &mut RngStream::new(5)).unwrap();
        let d = transmit(&s, &cfg, &h, &mut RngStream::new(6)).unwrap();
        for (y, s) in d.y.iter().zip(&s) {
            assert_eq!(*y, 2.5f64.sqrt() * s);
        }
        assert!(transmit(&s, &cfg, &h[..1], &mut RngStream::new(6)).is_err());
    }

    #[test]
    fn impairment_variance_matches_sum_of_kappas() {
        let cfg = ChannelConfig {
            kappa_t: 0.05,
            kappa_r: 0.15,
            noise_variance: 0.0,
            ..ChannelConfig::default()
        };
        let n = 1_000_000;
        let mut rng = RngStream::new(7);
        let s: Vec<Complex64> = (0..n)
            .map(|_| if rng.uniform() < 0.5 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, -1.0) })
            .collect();
        let h = draw_channel(&cfg, n, &mut rng).unwrap();
        let d = transmit(&s, &cfg, &h, &mut rng).unwrap();
        let var = d.y.iter().zip(&s).map(|(y, s)| (y - s).norm_sqr()).sum::<f64>() / n as f64;
        assert!(var > 0.2 * 0.98 && var < 0.2 * 1.02, "{var}");
    }

    #[test]
    fn laplacian_noise_variance_equals_gaussian() {
        for kind in [NoiseKind::Gaussian, NoiseKind::Laplacian] {
            let cfg = ChannelConfig {
                kappa_t: 0.0,
                kappa_r: 0.0,
                noise_variance: 0.7,
                noise_kind: kind,
                ..ChannelConfig::default()
            };
            let n = 1_000_000;
            let s = vec![Complex64::new(0.0, 0.0); n];
            let h = draw_channel(&cfg, n, &mut RngStream::new(8)).unwrap();
            let d = transmit(&s, &cfg, &h, &mut RngStream::new(9)).unwrap();
            let re = d.y.iter().map(|y| y.re * y.re).sum::<f64>() / n as f64;
            let im = d.y.iter().map(|y| y.im * y.im).sum::<f64>() / n as f64;
            assert!(((re + im) / 0.7 - 1.0).abs() < 0.02, "{kind:?} {}", re + im);
            assert!((re / 0.35 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn distortion_scales_with_power() {
        let n = 400_000;
        let var_at = |power: f64| {
            let cfg = ChannelConfig {
                power,
                kappa_t: 0.05,
                kappa_r: 0.15,
                noise_variance: 0.0,
                ..ChannelConfig::default()
            };
            let s = vec![Complex64::new(0.0, 0.0); n];
            let h = vec![Complex64::new(0.6, 0.8); n];
            let d = transmit(&s, &cfg, &h, &mut RngStream::new(10)).unwrap();
            let vt = d.eta_t.iter().map(|e| e.norm_sqr()).sum::<f64>() / n as f64;
            let vr = d.eta_r.iter().map(|e| e.norm_sqr()).sum::<f64>() / n as f64;
            (vt, vr)
        };
        let (t1, r1) = var_at(1.0);
        let (t2, r2) = var_at(2.0);
        assert!((t2 / t1 - 2.0).abs() < 0.02 && (r2 / r1 - 2.0).abs() < 0.02);
    }

    #[test]
    fn covariance_examples() {
        let cfg = ChannelConfig {
            kappa_t: 0.5,
            kappa_r: 0.5,
            noise_variance: 1.0,
            ..ChannelConfig::default()
        };
        let c = real_noise_covariance(&[Complex64::new(1.0, 0.0)], &cfg);
        assert_eq!(c.data(), &[1.0, 0.0, 0.0, 1.0]);
        let c = real_noise_covariance(&[Complex64::new(0.3, 0.2); 3], &quiet());
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacking_example() {
        let z = [Complex64::new(1.0, 2.0), Complex64::new(3.0, -1.0)];
        let r = stack_real(&z);
        assert_eq!(r.values(), &[1.0, 3.0, 2.0, -1.0]);
        let all_real = stack_real(&[Complex64::new(1.0, 0.0), Complex64::new(-4.0, 0.0)]);
        assert_eq!(&all_real.values()[2..], &[0.0, 0.0]);
        assert!(RealBatch::new(vec![1.0, 2.0, 3.0]).is_err());
        assert_eq!(r.to_pairs().data(), &[1.0, 2.0, 3.0, -1.0]);
        assert_eq!(RealBatch::from_pairs(&r.to_pairs()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn stack_unstack_round_trip(parts in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..40)) {
            let z: Vec<Complex64> = parts.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            prop_assert_eq!(unstack(&stack_real(&z)), z.clone());
            prop_assert_eq!(pairs_to_complex(&complex_to_pairs(&z)).unwrap(), z);
        }
    }
}

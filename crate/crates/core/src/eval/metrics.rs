use serde::Serialize;

use crate::error::{Error, Result};

/// A mean squared error in linear scale and in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseDb {
    pub linear: f64,
    /// `10 log10(linear)`; `-inf` when `linear` is exactly zero.
    pub db: f64,
}

impl MseDb {
    pub fn from_linear(linear: f64) -> Self {
        Self {
            linear,
            db: to_db(linear),
        }
    }
}

pub fn to_db(linear: f64) -> f64 {
    if linear == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * linear.log10()
    }
}

pub fn mse_db(x: &[f64], x_hat: &[f64]) -> Result<MseDb> {
    if x.len() != x_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "mse of lengths {} and {}",
            x.len(),
            x_hat.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("mse of empty batches".into()));
    }
    let sse: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(MseDb::from_linear(sse / x.len() as f64))
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile `q` of sorted data, interpolating at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("box stats need non-empty, non-NaN data".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

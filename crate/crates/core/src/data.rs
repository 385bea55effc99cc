//! Training and source datasets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor2};
use crate::output::write_atomic;

const THETA_MIN: f64 = 1.5 * PI;
const THETA_MAX: f64 = 4.5 * PI;

/// 2-D swiss roll `theta (cos theta, sin theta) / scale`, with
/// `theta = 1.5 pi (1 + 2u)`, `u ~ Unif[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwissRollConfig {
    pub n: usize,
    pub noise_std: f64,
    pub scale: f64,
}

impl Default for SwissRollConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            noise_std: 0.0,
            scale: 10.0,
        }
    }
}

pub fn swiss_roll_point(u: f64, scale: f64) -> (f64, f64) {
    let theta = THETA_MIN * (1.0 + 2.0 * u);
    (theta * theta.cos() / scale, theta * theta.sin() / scale)
}

pub fn swiss_roll(cfg: &SwissRollConfig, rng: &mut RngStream) -> Result<Tensor2> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("swiss roll needs at least one sample".into()));
    }
    if !(cfg.scale > 0.0) || !(cfg.noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad swiss roll config {cfg:?}")));
    }
    let mut data = Vec::with_capacity(2 * cfg.n);
    for _ in 0..cfg.n {
        let (x, y) = swiss_roll_point(rng.uniform(), cfg.scale);
        data.push(x + cfg.noise_std * rng.standard_normal());
        data.push(y + cfg.noise_std * rng.standard_normal());
    }
    Tensor2::from_vec(cfg.n, 2, data)
}

/// Piecewise-linear approximation of the noiseless swiss-roll curve.
#[derive(Debug, Clone)]
pub struct SwissRollManifold {
    vertices: Vec<(f64, f64)>,
}

impl SwissRollManifold {
    pub fn new(scale: f64, segments: usize) -> Self {
        let vertices = (0..=segments)
            .map(|i| swiss_roll_point(i as f64 / segments as f64, scale))
            .collect();
        Self { vertices }
    }

    /// Euclidean distance from `p` to the nearest point on the curve.
    pub fn distance(&self, p: (f64, f64)) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let s = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
            let (cx, cy) = (a.0 + s * dx - p.0, a.1 + s * dy - p.1);
            best = best.min(cx * cx + cy * cy);
        }
        best.sqrt()
    }

    pub fn distances(&self, points: &Tensor2) -> Vec<f64> {
        (0..points.rows())
            .map(|r| self.distance((points.get(r, 0), points.get(r, 1))))
            .collect()
    }

    pub fn mean_distance(&self, points: &Tensor2) -> f64 {
        let d = self.distances(points);
        d.iter().sum::<f64>() / d.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Uniform,
    SwissRoll,
}

/// `n` real source values in `[-1, 1]`.
///
/// The swiss-roll kind flattens `(x, y)` pairs of a roll scaled by
/// `4.5 pi`, which keeps every coordinate inside the quantizer range.
pub fn source_batch(kind: SourceKind, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("source batch must be non-empty".into()));
    }
    Ok(match kind {
        SourceKind::Uniform => (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        SourceKind::SwissRoll => {
            let pairs = n.div_ceil(2);
            let mut v = Vec::with_capacity(2 * pairs);
            for _ in 0..pairs {
                let (x, y) = swiss_roll_point(rng.uniform(), THETA_MAX);
                v.push(x);
                v.push(y);
            }
            v.truncate(n);
            v
        }
    })
}

/// Writes `x,y` rows.
pub fn write_points_csv(path: &Path, points: &Tensor2) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"])?;
    for r in 0..points.rows() {
        w.write_record([points.get(r, 0).to_string(), points.get(r, 1).to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

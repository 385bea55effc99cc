//! Intermediate reverse-process states of saved training snapshots.

use std::path::{Path, PathBuf};

use crate::ddpm::{sample_with_trajectory, NoiseSchedule, SampleOptions, SamplerVariance, Snapshot};
use crate::error::{Error, Result};
use crate::numerics::{sample_standard_normal, RngStream, Tensor2};
use crate::output::write_atomic;

use super::report::finish;

/// `{50, 60, ..., 100}`.
pub fn default_t_grid() -> Vec<usize> {
    (5..=10).map(|i| 10 * i).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub epoch: usize,
    pub t: usize,
    pub points: Tensor2,
}

impl PointSet {
    pub fn file_name(&self) -> String {
        format!("points_e{}_t{}.csv", self.epoch, self.t)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "t", "x", "y"])?;
        let (e, t) = (self.epoch.to_string(), self.t.to_string());
        for r in 0..self.points.rows() {
            w.write_record([
                e.as_str(),
                t.as_str(),
                &self.points.get(r, 0).to_string(),
                &self.points.get(r, 1).to_string(),
            ])?;
        }
        finish(w)
    }
}

/// Runs one reverse chain per snapshot from the same `N(0, I)` start and the
/// same sampler noise, recording `x_t` for each `t` in `t_grid` (`t = T` is
/// the start itself, `t = 0` the final sample).
pub fn snapshot_grid(
    snapshots: &[Snapshot],
    sched: &NoiseSchedule,
    t_grid: &[usize],
    n_points: usize,
    variance: SamplerVariance,
    rng: &RngStream,
) -> Result<Vec<PointSet>> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("snapshot grid needs points".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t > sched.steps()) {
        return Err(Error::StepOutOfRange { t, max: sched.steps() });
    }
    let mut out = Vec::with_capacity(snapshots.len() * t_grid.len());
    for snap in snapshots {
        let dim = snap.model.input_dim();
        let x_t = sample_standard_normal(&mut rng.substream("start"), n_points, dim);
        let mut sampler_rng = rng.substream("sampler");
        let mut captured: Vec<Option<Tensor2>> = vec![None; t_grid.len()];
        let options = SampleOptions { t_start: None, variance };
        sample_with_trajectory(&snap.model, &x_t, sched, &mut sampler_rng, options, |t, x| {
            for (slot, &want) in captured.iter_mut().zip(t_grid) {
                if want == t {
                    *slot = Some(x.clone());
                }
            }
        })?;
        for (points, &t) in captured.into_iter().zip(t_grid) {
            out.push(PointSet {
                epoch: snap.epoch,
                t,
                points: points.expect("every step up to T is observed"),
            });
        }
    }
    Ok(out)
}

pub fn write_point_sets(dir: &Path, sets: &[PointSet]) -> Result<Vec<PathBuf>> {
    sets.iter()
        .map(|s| {
            let p = dir.join(s.file_name());
            write_atomic(&p, &s.to_csv()?)?;
            Ok(p)
        })
        .collect()
}

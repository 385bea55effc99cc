//! Metrics and experiment drivers.

mod grid;
mod hwi;
mod link;
mod metrics;
mod report;

pub use grid::{default_t_grid, snapshot_grid, write_point_sets, PointSet};
pub use hwi::{hwi_sweep, HwiPoint, HwiReport, HwiSweepConfig, BOXPLOT_COLUMNS};
pub use link::{
    default_snr_grid, draw_link, score_estimate, snr_sweep, train_baselines, BaselineSet, LinkDraw, LinkScore,
    LinkSetup, Receiver, ReceiverKind, SnrSweepConfig,
};
pub use metrics::{box_stats, mse_db, quantile_sorted, to_db, BoxStats, MseDb};
pub use report::{ExperimentReport, SweepRow, SWEEP_COLUMNS};

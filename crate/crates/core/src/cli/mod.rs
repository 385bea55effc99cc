//! Command-line front end.

mod config;
mod run;

pub use config::{apply_override, Command, GradcheckConfig, LinkTrainConfig, RunConfig, SnapshotGridConfig};
pub use run::{
    constellation_dataset, ddpm_model_path, execute, exit_code, gradcheck_baseline, gradcheck_mlp,
    load_swissroll_snapshots, swissroll_snapshot_path,
};

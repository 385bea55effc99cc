//! Run configuration: a TOML document with defaults for every field, plus
//! dotted `key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::data::SwissRollConfig;
use crate::ddpm::{SamplerVariance, ScheduleConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{default_t_grid, HwiSweepConfig, SnrSweepConfig};
use crate::neural::MlpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TrainSwissroll,
    TrainLink,
    SnrSweep,
    HwiSweep,
    SnapshotGrid,
    Gradcheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::TrainSwissroll,
        Command::TrainLink,
        Command::SnrSweep,
        Command::HwiSweep,
        Command::SnapshotGrid,
        Command::Gradcheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::TrainSwissroll => "train-swissroll",
            Command::TrainLink => "train-link",
            Command::SnrSweep => "snr-sweep",
            Command::HwiSweep => "hwi-sweep",
            Command::SnapshotGrid => "snapshot-grid",
            Command::Gradcheck => "gradcheck",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|c| c.as_str()).collect();
                Error::Config(format!("unknown command `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkTrainConfig {
    /// One diffusion model is trained per listed constellation order.
    pub orders: Vec<u32>,
    /// Random constellation points in the training set.
    pub dataset_size: usize,
    pub power: f64,
}

impl Default for LinkTrainConfig {
    fn default() -> Self {
        Self {
            orders: vec![16, 64, 256],
            dataset_size: 10_000,
            power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotGridConfig {
    pub t_grid: Vec<usize>,
    pub n_points: usize,
    pub sampler_variance: SamplerVariance,
    /// Line segments approximating the swiss roll for distance summaries.
    pub manifold_segments: usize,
}

impl Default for SnapshotGridConfig {
    fn default() -> Self {
        Self {
            t_grid: default_t_grid(),
            n_points: 1000,
            sampler_variance: SamplerVariance::Beta,
            manifold_segments: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub probes: usize,
    pub h: f64,
    pub batch: usize,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            probes: 200,
            h: 1e-5,
            batch: 16,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Where trained models are written and read; empty means `output_dir`.
    pub model_dir: PathBuf,
    pub schedule: ScheduleConfig,
    pub model: MlpConfig,
    pub train: TrainConfig,
    pub swiss_roll: SwissRollConfig,
    pub link: LinkTrainConfig,
    pub baseline: BaselineConfig,
    pub snr_sweep: SnrSweepConfig,
    pub hwi_sweep: HwiSweepConfig,
    pub snapshot_grid: SnapshotGridConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 42,
            output_dir: PathBuf::from("out"),
            model_dir: PathBuf::new(),
            schedule: ScheduleConfig::default(),
            model: MlpConfig::default(),
            train: TrainConfig::default(),
            swiss_roll: SwissRollConfig::default(),
            link: LinkTrainConfig::default(),
            baseline: BaselineConfig::default(),
            snr_sweep: SnrSweepConfig::default(),
            hwi_sweep: HwiSweepConfig::default(),
            snapshot_grid: SnapshotGridConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn model_dir(&self) -> &Path {
        if self.model_dir.as_os_str().is_empty() {
            &self.output_dir
        } else {
            &self.model_dir
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text` (possibly empty) and applies `overrides` in order.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }
}

/// Sets a dotted key. Values are read as TOML literals where possible
/// (`3`, `0.5`, `[16, 64]`, `true`) and as bare strings otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

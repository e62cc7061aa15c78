//! Structured text (TOML) configuration files for the CLI subcommands.
//! Every config embeds or derives a scene description; unknown keys are
//! rejected so typos fail loudly as configuration errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenetError, Result};
use crate::room::ScenarioSpec;

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(BenetError::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text)
        .map_err(|e| BenetError::Config(format!("bad config {}: {e}", path.display())))
}

/// `gen-dataset` settings: how many clips, which room, where to put the
/// image files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Target reverberation time of the training room.
    pub rt60: f64,
    /// Clip pairs to generate (one DP and one REV image each).
    pub count: usize,
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Explicit scene; defaults to the standard room for `rt60`.
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
}

fn default_seed() -> u64 {
    0
}

impl DatasetConfig {
    pub fn load(path: &Path) -> Result<DatasetConfig> {
        let c: DatasetConfig = parse(path)?;
        if c.count == 0 {
            return Err(BenetError::Config("count must be positive".into()));
        }
        Ok(c)
    }

    pub fn scenario(&self) -> ScenarioSpec {
        self.scenario
            .clone()
            .unwrap_or_else(|| ScenarioSpec::for_rt60(self.rt60))
    }
}

/// `train` settings: dataset manifest in, checkpoint out.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub manifest: PathBuf,
    pub out_model: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Encoder channel width; bottleneck is twice this.
    #[serde(default = "default_width")]
    pub width: usize,
    /// Cap on training epochs; defaults to the room's published budget.
    #[serde(default)]
    pub max_epochs: Option<usize>,
    /// Optional CSV path for the per-epoch log.
    #[serde(default)]
    pub log_csv: Option<PathBuf>,
}

fn default_width() -> usize {
    64
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<TrainConfig> {
        let c: TrainConfig = parse(path)?;
        if c.width == 0 {
            return Err(BenetError::Config("width must be positive".into()));
        }
        Ok(c)
    }
}

/// `experiment` settings: which trained model, which sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    /// Reverberation time of the base test room.
    pub rt60: f64,
    /// Source offsets in meters; empty means just the trained position.
    #[serde(default)]
    pub offsets: Vec<[f64; 3]>,
    /// Additional cross-room reverberation times.
    #[serde(default)]
    pub test_rt60s: Vec<f64>,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub beamformers_at_test: bool,
    /// Held-out test files to synthesize.
    #[serde(default = "default_files")]
    pub files: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out_csv: PathBuf,
    #[serde(default = "default_clip_seconds")]
    pub clip_seconds: f64,
}

fn default_snr() -> f64 {
    20.0
}

fn default_files() -> usize {
    5
}

fn default_clip_seconds() -> f64 {
    2.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = parse(path)?;
        if c.files == 0 {
            return Err(BenetError::Config("files must be positive".into()));
        }
        if c.offsets.is_empty() && c.test_rt60s.is_empty() {
            return Err(BenetError::Config(
                "experiment needs at least one offset or cross-room condition".into(),
            ));
        }
        Ok(c)
    }
}

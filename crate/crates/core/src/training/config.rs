use std::path::{Path, PathBuf};

use psgan_nn::AdamConfig;
use serde::{Deserialize, Serialize};

use super::LossWeights;
use crate::model::ArchConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        let c = AdamConfig::default();
        Self { lr: c.lr, beta1: c.beta1, beta2: c.beta2, eps: c.eps }
    }
}

impl From<AdamSettings> for AdamConfig {
    fn from(s: AdamSettings) -> Self {
        AdamConfig { lr: s.lr, beta1: s.beta1, beta2: s.beta2, eps: s.eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Prepared dataset directory.
    pub dataset: PathBuf,
    /// Where checkpoints and metrics go.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: "data/prepared".into(), output: "runs/default".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    /// Registered GCI detector name.
    pub gci_detector: String,
    /// Directory of `<utterance>.gci` files for the `mark-file` detector.
    pub mark_dir: Option<PathBuf>,
}

impl Default for Analysis {
    fn default() -> Self {
        Self { gci_detector: "lp-residual".into(), mark_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Target waveform: `glottal` or `speech`.
    pub mode: String,
    pub iterations: u64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub adam: AdamSettings,
    pub arch: ArchConfig,
    pub paths: Paths,
    pub analysis: Analysis,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: "glottal".into(),
            iterations: 100_000,
            batch_size: 1,
            segment_frames: 150,
            checkpoint_every: 1000,
            seed: 0,
            weights: LossWeights::default(),
            adam: AdamSettings::default(),
            arch: ArchConfig::default(),
            paths: Paths::default(),
            analysis: Analysis::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.arch.validate()?;
        crate::vocoder::target_modes().create(&self.mode, &()).map_err(|e| Error::Config(e.to_string()))?;
        if self.batch_size == 0 || self.segment_frames == 0 {
            return Err(Error::Config("batch_size and segment_frames must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

//! Run configuration: one JSON document holding every stage's settings.
//! Missing fields take their defaults; unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::TrainAugmentConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::seed::derive_seed;
use crate::train::TrainConfig;

/// File name of the configuration snapshot written into a run directory.
pub const SNAPSHOT_FILE: &str = "config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub manifest: Option<PathBuf>,
    pub backbone_weights: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub augment: TrainAugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: RunPaths,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.augment.validate()?;
        self.model.validate().map_err(|e| match e {
            Error::Shape(msg) => Error::config("model.input_height", msg),
            other => other,
        })?;
        self.train.validate()?;
        if self.model.input_height != self.preprocess.target_height {
            return Err(Error::config(
                "model.input_height",
                format!(
                    "{} differs from preprocess.target_height {}",
                    self.model.input_height, self.preprocess.target_height
                ),
            ));
        }
        if self.model.input_width != self.preprocess.target_width {
            return Err(Error::config(
                "model.input_width",
                format!(
                    "{} differs from preprocess.target_width {}",
                    self.model.input_width, self.preprocess.target_width
                ),
            ));
        }
        Ok(())
    }

    /// Parses and validates JSON text. Blank text is the all-default config.
    pub fn from_json(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::new() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Derives the model-init, shuffle and augmentation seeds from one value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.model.init_seed = derive_seed(seed, &[0]);
        self.train.shuffle_seed = derive_seed(seed, &[1]);
        self.augment.seed = derive_seed(seed, &[2]);
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(&text)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fixture::FixtureConfig;
use crate::detector::{TrainConfig, TrainingMode};
use crate::error::{Error, Result};
use crate::features::{digest_json, ExtractorConfig};

/// Everything that determines a run's outputs. Worker count is deliberately
/// absent: results must not depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub extractors: ExtractorConfig,
    pub train: TrainConfig,
    pub mode: TrainingMode,
    /// Restricts training to one dataset tag.
    pub dataset: Option<String>,
    /// Largest tolerated fraction of tracks that fail extraction.
    pub failure_cap: f64,
    /// Also train the three single-feature baselines.
    pub baselines: bool,
    pub fixture: FixtureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 16000,
            extractors: ExtractorConfig::default(),
            train: TrainConfig::default(),
            mode: TrainingMode::SampleWeighted,
            dataset: None,
            failure_cap: 0.01,
            baselines: true,
            fixture: FixtureConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.failure_cap) {
            return Err(Error::InvalidArgument(format!("failure_cap {} outside [0, 1]", self.failure_cap)));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be positive".into()));
        }
        self.train.validate()
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn hash(&self) -> String {
        digest_json("run-config", self)
    }
}

//! TOML run configuration. Every section and key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::client::{DefectRates, GenerationParams, RetryPolicy};
use super::HarnessError;
use crate::annotation::DEFAULT_DEDUP_THRESHOLD;
use crate::grpo::{ClipParams, SimulationConfig};
use crate::numeric::Scalar;
use crate::reward::RewardConfig;
use crate::scheduler::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct AdvantageConfig<T> {
    pub epsilon: T,
}

impl<T: Scalar> Default for AdvantageConfig<T> {
    fn default() -> Self {
        Self { epsilon: T::lit(1e-8) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub strategy: Strategy,
    pub warmup_fraction: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ModelGuided,
            warmup_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub defects: DefectRates,
    pub generation: GenerationParams,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct Config<T> {
    pub seed: u64,
    pub dedup_threshold: f64,
    pub reward: RewardConfig<T>,
    pub clip: ClipParams<T>,
    pub advantage: AdvantageConfig<T>,
    pub scheduler: SchedulerConfig,
    pub stub: StubConfig,
    pub simulation: SimulationConfig<T>,
}

impl<T: Scalar> Default for Config<T> {
    fn default() -> Self {
        Self {
            seed: 0,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            reward: RewardConfig::default(),
            clip: ClipParams::default(),
            advantage: AdvantageConfig::default(),
            scheduler: SchedulerConfig::default(),
            stub: StubConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl<T: Scalar> Config<T> {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |e: String| HarnessError::Config(e);
        self.reward.validate().map_err(|e| invalid(e.to_string()))?;
        self.clip.validate().map_err(|e| invalid(e.to_string()))?;
        self.simulation.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.advantage.epsilon.is_finite() && self.advantage.epsilon >= T::zero()) {
            return Err(invalid("advantage.epsilon must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.scheduler.warmup_fraction) {
            return Err(invalid("scheduler.warmup_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return Err(invalid("dedup_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

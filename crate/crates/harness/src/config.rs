//! Experiment configuration: JSON with sections `env`, `agent`, `beta`, `run`.
//! Unknown keys anywhere are rejected.

use std::path::Path;

use flsvi_core::bonus::{BetaMode, BetaParams, BonusConfig, SensitivitySource};
use flsvi_core::sensitivity::DEFAULT_SAMPLING_CONSTANT;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::EnvSpec;
use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Tabular,
    /// Requires an environment that provides features.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Flsvi,
    /// A fresh uniformly random deterministic policy every episode.
    Random,
}

fn default_delta() -> f64 {
    0.1
}

fn default_sampling_constant() -> f64 {
    DEFAULT_SAMPLING_CONSTANT
}

fn default_true() -> bool {
    true
}

fn default_c_prime() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

fn default_source() -> SensitivitySource {
    SensitivitySource::Estimator
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_kind")]
    pub kind: AgentKind,
    #[serde(default = "default_class")]
    pub class: ClassKind,
    pub episodes: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_sampling_constant")]
    pub sampling_constant: f64,
    #[serde(default = "default_source")]
    pub sensitivity_source: SensitivitySource,
    #[serde(default)]
    pub distinct_cap: Option<usize>,
    #[serde(default)]
    pub cache_subsample_per_episode: bool,
    #[serde(default = "default_true")]
    pub bonus_enabled: bool,
}

fn default_kind() -> AgentKind {
    AgentKind::Flsvi
}

fn default_class() -> ClassKind {
    ClassKind::Tabular
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    pub mode: BetaMode,
    /// Required in practical mode.
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default = "default_c_prime")]
    pub c_prime: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "default_scale")]
    pub practical_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSection,
    pub beta: BetaSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.run.seeds.is_empty() {
            return bad("run.seeds must list at least one seed".into());
        }
        if !(self.agent.delta > 0.0 && self.agent.delta < 1.0) {
            return bad(format!("agent.delta must lie in (0, 1), got {}", self.agent.delta));
        }
        if !(self.agent.sampling_constant > 0.0) {
            return bad("agent.sampling_constant must be positive".into());
        }
        self.beta_params()
            .validate()
            .map_err(|e| HarnessError::Config(format!("beta: {e}")))?;
        Ok(())
    }

    pub fn beta_params(&self) -> BetaParams {
        BetaParams {
            mode: self.beta.mode,
            c_prime: self.beta.c_prime,
            beta_override: self.beta.value,
            zeta: self.beta.zeta,
            practical_scale: self.beta.practical_scale,
        }
    }

    pub fn bonus_config(&self) -> BonusConfig {
        BonusConfig {
            beta: self.beta_params(),
            sampling_constant: self.agent.sampling_constant,
            sensitivity_source: self.agent.sensitivity_source,
            practical_distinct_cap: self.agent.distinct_cap,
            cache_subsample_per_episode: self.agent.cache_subsample_per_episode,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

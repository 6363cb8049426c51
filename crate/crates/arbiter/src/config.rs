//! TOML run configuration. Every section falls back to its defaults, so a
//! file only needs the keys it changes; `arbiter config init` writes the
//! full default file.

use std::path::{Path, PathBuf};

use arbiter_core::agent::{AgentConfig, PretrainConfig};
use arbiter_core::env::EnvConfig;
use arbiter_core::evaluation::{Assistance, EvalSettings};
use arbiter_core::intent::IntentParams;
use arbiter_core::reward::RewardParams;
use arbiter_core::training::TrainingConfig;
use arbiter_core::users::UserMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Episodes per evaluation or trace command.
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            eval_episodes: 15,
            output_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserSection {
    /// Simulated user for training, evaluation and traces.
    pub mode: UserMode,
}

impl Default for UserSection {
    fn default() -> Self {
        UserSection {
            mode: UserMode::Straight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub port: u16,
    pub tick_hz: f64,
    /// Remote input older than this many ticks counts as zero.
    pub stale_ticks: u64,
    pub assistance: Assistance,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            port: 8765,
            tick_hz: 20.0,
            stale_ticks: 10,
            assistance: Assistance::Shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub intent: IntentParams,
    pub reward: RewardParams,
    pub agent: AgentConfig,
    pub pretrain: PretrainConfig,
    pub user: UserSection,
    pub serve: ServeSection,
}

impl RunConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_toml(&text).map_err(|message| CliError::ConfigParse {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config is always representable as TOML")
    }

    pub fn validate(&self) -> arbiter_core::Result<()> {
        self.training().validate()?;
        self.pretrain.validate()?;
        let m = &self.reward.modality;
        if m.n_samples < 64 {
            return Err(arbiter_core::Error::Config("reward.modality.n_samples must be at least 64".into()));
        }
        if !(self.serve.tick_hz.is_finite() && self.serve.tick_hz > 0.0) {
            return Err(arbiter_core::Error::Config("serve.tick_hz must be positive".into()));
        }
        if self.run.eval_episodes == 0 {
            return Err(arbiter_core::Error::Config("run.eval_episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            env: self.env.clone(),
            intent: self.intent,
            reward: self.reward,
            agent: self.agent.clone(),
            user: self.user.mode,
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            env: self.env.clone(),
            intent: self.intent,
            kappa: self.reward.kappa,
            modality: self.reward.modality,
            user: self.user.mode,
        }
    }
}

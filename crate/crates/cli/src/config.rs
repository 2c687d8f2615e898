//! Experiment configuration files.

use std::path::Path;

use acia_core::{DataIntervention, Error as CoreError, GenConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs. Each section is optional; a command only
/// requires the sections it uses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Data-level intervention for R2 and IR. Defaults to the family's operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<DataIntervention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Turn a core validation error into one carrying a dotted field path under `section`.
fn located(section: &str, err: CoreError) -> CliError {
    let (path, message) = match err {
        CoreError::Config(msg) => match msg.split_once(": ") {
            Some((field, rest)) if !field.contains(' ') => (format!("{section}.{field}"), rest.to_string()),
            _ => (section.to_string(), msg),
        },
        CoreError::AlphaOutOfRange(a) => (format!("{section}.alpha"), format!("{a} is outside [0, 1]")),
        CoreError::DuplicateEnvironmentId(id) => (format!("{section}.envs"), format!("duplicate environment id {id}")),
        other => (section.to_string(), other.to_string()),
    };
    CliError::Validation { path, message }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Check every nested invariant before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(g) = &self.gen {
            g.validate().map_err(|e| located("gen", e))?;
        }
        let n_envs = self.gen.as_ref().map_or(2, |g| g.envs.len().max(2));
        self.train.validate(n_envs).map_err(|e| located("train", e))?;
        if let Some(iv) = &self.intervention {
            iv.validate().map_err(|e| located("intervention", e))?;
            if let (Some(f), Some(g)) = (iv.family(), &self.gen) {
                if f != g.family {
                    return Err(CliError::Validation {
                        path: "intervention.op".into(),
                        message: format!("{f} operator does not apply to {} data", g.family),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

/// Read, parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    let cfg = ExperimentConfig::parse(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

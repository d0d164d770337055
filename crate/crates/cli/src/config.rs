use std::path::{Path, PathBuf};

use argfill_core::evaluation::{EvalMode, MatchPolicy};
use argfill_core::matching::{ModelConfig, Thresholds};
use argfill_core::training::TrainingConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{io_failure, usage, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tau_text: f64,
    pub tau_vis: f64,
    pub mode: EvalMode,
    pub policy: MatchPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let t = Thresholds::default();
        Self { tau_text: t.text, tau_vis: t.image, mode: EvalMode::default(), policy: MatchPolicy::default() }
    }
}

impl EvalConfig {
    pub fn thresholds(&self) -> CliResult<Thresholds> {
        Ok(Thresholds::new(self.tau_text, self.tau_vis)?)
    }
}

/// Contents of a `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub training: TrainingConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
}

impl FileConfig {
    /// Parses the file and reports whether it pinned the vision input size.
    pub fn load(path: Option<&Path>) -> CliResult<(Self, bool)> {
        let Some(path) = path else {
            return Ok((Self::default(), false));
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let table: toml::Table = match text.parse() {
            Ok(t) => t,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        let pinned = table
            .get("model")
            .and_then(|m| m.get("vision"))
            .and_then(|v| v.get("image_size"))
            .is_some();
        match toml::from_str::<FileConfig>(&text) {
            Ok(cfg) => Ok((cfg, pinned)),
            Err(e) => usage(format!("{}: {e}", path.display())),
        }
    }
}

/// Everything a run was invoked with, after merging flags into the file config.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub output_dir: PathBuf,
    pub force: bool,
    pub config_file: Option<PathBuf>,
    pub inputs: serde_json::Map<String, serde_json::Value>,
    pub training: TrainingConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) {
        self.inputs.insert(key.into(), serde_json::to_value(value).expect("input serializes"));
    }
}

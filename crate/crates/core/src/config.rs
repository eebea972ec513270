//! Run configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimationMode, FilterSettings, ProcessNoise};
use crate::measurement::MeterPlacement;
use crate::net::DEFAULT_MAX_SEGMENT_LENGTH;
use crate::scenario::{BadDataSpec, NoiseSpec, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub mode: EstimationMode,
    pub robust: bool,
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
    pub p0: f64,
    /// Q diagonal for every state class without its own override.
    pub q: f64,
    pub q_power: Option<f64>,
    pub q_density: Option<f64>,
    pub q_flow: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let s = FilterSettings::default();
        EstimatorConfig {
            mode: EstimationMode::Integrated,
            robust: s.robust,
            alpha: s.alpha,
            beta: s.beta,
            window: s.window,
            p0: s.p0,
            q: s.q.power,
            q_power: None,
            q_density: None,
            q_flow: None,
        }
    }
}

impl EstimatorConfig {
    pub fn settings(&self) -> FilterSettings {
        FilterSettings {
            alpha: self.alpha,
            beta: self.beta,
            window: self.window,
            p0: self.p0,
            q: ProcessNoise {
                power: self.q_power.unwrap_or(self.q),
                density: self.q_density.unwrap_or(self.q),
                flow: self.q_flow.unwrap_or(self.q),
            },
            robust: self.robust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model file; relative paths are taken from the config file's directory.
    pub model: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_segment_length")]
    pub max_segment_length: f64,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub measurements: MeterPlacement,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub bad_data: BadDataSpec,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_max_segment_length() -> f64 {
    DEFAULT_MAX_SEGMENT_LENGTH
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        if cfg.model.is_relative() {
            cfg.model = base_dir.join(&cfg.model);
        }
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base_dir.join(out));
            }
        }
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::from_toml_str(&text, base, path)
}

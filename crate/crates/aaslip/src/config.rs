//! Single human-editable configuration file with sections for the model,
//! cost, transcription, solver and experiments. Unspecified keys fall back
//! to the nominal values, and the fully resolved configuration is embedded
//! in every output file for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objective::CostParams;
use crate::solver::SolverSettings;
use crate::transcription::TranscriptionConfig;

/// Experiment ranges and resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentsConfig {
    /// Points in a one-dimensional sweep.
    pub sweep_points: usize,
    /// Points per axis in a two-dimensional grid.
    pub grid_points: [usize; 2],
    pub apex_height_range: [f64; 2],
    pub alpha_range: [f64; 2],
    pub apex_velocity_range: [f64; 2],
    pub damping_range: [f64; 2],
    /// Warm-start each solve from its sweep neighbor.
    pub warm_start: bool,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        ExperimentsConfig {
            sweep_points: 31,
            grid_points: [21, 21],
            apex_height_range: [0.6, 1.2],
            alpha_range: [0.0, 1.0],
            apex_velocity_range: [0.4, 1.4],
            damping_range: [0.1, 1.0],
            warm_start: true,
        }
    }
}

/// The resolved application configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub model: ModelParams,
    pub cost: CostParams,
    pub transcription: TranscriptionConfig,
    pub solver: SolverSettings,
    pub experiments: ExperimentsConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<AppConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: AppConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cost.validate()?;
        self.transcription.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

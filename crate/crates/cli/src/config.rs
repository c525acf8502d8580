//! Optional TOML run configuration. Every section may be omitted or partial;
//! missing values take the library defaults and command-line flags override
//! whatever the file says.

use std::path::Path;

use loadid_core::signalgen::{AmbientSpec, EdgeMode, FaultSpec};
use loadid_core::{SolverOptions, SystemConfig, WindowPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Measurement error added by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Target SNR in dB; no error is added when absent.
    pub snr_db: Option<f64>,
    pub offset_fraction: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            snr_db: None,
            offset_fraction: 0.001,
        }
    }
}

/// Pre-identification low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub enabled: bool,
    pub cutoff_hz: f64,
    pub edge: EdgeMode,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            enabled: true,
            cutoff_hz: 2.0,
            edge: EdgeMode::Predict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub system: SystemConfig,
    pub ambient: AmbientSpec,
    pub noise: NoiseSection,
    pub window: WindowPolicy,
    pub solver: SolverOptions,
    pub fault: FaultSpec,
    pub filter: FilterSection,
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    /// The run seed: the flag if given, else the file's.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.seed).ok_or_else(|| {
            CliError::Usage("a seed is required (--seed or `seed` in the config)".into())
        })
    }
}

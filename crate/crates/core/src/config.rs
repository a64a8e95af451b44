//! JSON run configuration shared by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{OracleOptions, RemoteConfig};
use crate::error::{Error, Result};
use crate::search::SearchConfig;

/// Search hyperparameters at the top level, plus backend settings.
///
/// ```json
/// { "u_min": 224, "s_max": 60, "gamma": 0.6,
///   "fusion": { "bias": 0.3, "normalization": "plain_sigmoid" },
///   "remote": { "relevance_url": "http://localhost:8000" } }
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub search: SearchConfig,
    pub remote: RemoteConfig,
    pub oracle: OracleOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.search.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies environment endpoint overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.remote = cfg.remote.with_env_overrides();
        Ok(cfg)
    }
}

//! JSON configuration file.
//!
//! A config holds an optional scenario plus optional defaults for each
//! subcommand. Command-line flags take precedence; when a flag overrides a
//! value that the file also sets, a warning goes to stderr.

use std::path::Path;

use anyhow::{Context, Result};
use rsma_core::montecarlo::{CdfSpec, SweepSpec};
use rsma_core::rsma::ScaOptions;
use rsma_core::Scenario;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub sca: Option<ScaOptions>,
    pub pairing_eps: Option<f64>,
    pub grid_points: Option<usize>,
    pub sweep: Option<SweepSpec>,
    pub cdf: Option<CdfSpec>,
}

/// Parsed config plus the raw document, used to tell which keys were set.
pub struct Loaded {
    pub config: Config,
    raw: Value,
}

impl Loaded {
    pub fn empty() -> Self {
        Loaded {
            config: Config::default(),
            raw: Value::Null,
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let raw: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let config = serde_json::from_value(raw.clone()).with_context(|| format!("invalid config {}", path.display()))?;
        Ok(Loaded { config, raw })
    }

    /// True if the file sets `key` inside `section` (or at top level when
    /// `section` is empty).
    pub fn has(&self, section: &str, key: &str) -> bool {
        let node = if section.is_empty() { Some(&self.raw) } else { self.raw.get(section) };
        node.and_then(|n| n.get(key)).is_some()
    }

    pub fn scenario(&self) -> Result<&Scenario> {
        self.config
            .scenario
            .as_ref()
            .context("config has no \"scenario\" section")
    }
}

/// Applies a flag value over a config value, warning when both are set.
pub fn override_with<T>(loaded: &Loaded, section: &str, key: &str, flag: Option<T>, slot: &mut T) {
    if let Some(v) = flag {
        if loaded.has(section, key) {
            let at = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            eprintln!("warning: --{} overrides {at} from the config file", key.replace('_', "-"));
        }
        *slot = v;
    }
}

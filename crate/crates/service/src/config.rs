//! Optional TOML configuration. Every key mirrors a command-line flag;
//! flags win over the file, and the file wins over built-in defaults.
//!
//! ```toml
//! [serve]
//! host = "127.0.0.1"
//! port = 8080
//! assets = "/var/lib/voxcompose"
//!
//! [compose]
//! resolution = 64
//! closing = 1
//!
//! [sweep]
//! steps = 33
//! resolution = 64
//! iou_resolution = 128
//! samples = 10000
//! seed = 0
//! baseline = 1.8
//! threads = 4
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub serve: ServeConfig,
    pub compose: ComposeConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeConfig {
    pub resolution: Option<usize>,
    pub closing: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub steps: Option<usize>,
    pub resolution: Option<usize>,
    pub iou_resolution: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub baseline: Option<f64>,
    pub threads: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Config> {
        Ok(toml::from_str(text)?)
    }
}

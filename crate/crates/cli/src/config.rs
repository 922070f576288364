//! Optional TOML run configuration. Command-line flags override these values,
//! which override the built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub cause_columns: Option<Vec<String>>,
    pub effect_columns: Option<Vec<String>>,
    pub cause_prefix: Option<String>,
    pub effect_prefix: Option<String>,
    pub features: Option<bool>,
    pub delay: Option<usize>,
    pub stride: Option<usize>,
    pub window: Option<usize>,
    pub pca_ratio: Option<f64>,
    pub clusters: Option<usize>,
    pub dt: Option<usize>,
    pub eta_c: Option<f64>,
    pub eta_wx: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub block_diagonal: Option<bool>,
    pub truth_column: Option<String>,
    pub kmeans_seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// First of command line, config file, default.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

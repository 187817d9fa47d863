//! Flat `key = value` run configuration.
//!
//! ```text
//! lr_high = 1e-4
//! lr_low = 1e-3
//! max_epochs = 50
//! lambda = 0.3
//! ```
//!
//! Unknown keys are rejected; missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::SimilarityKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(String),
    #[error("bad config value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub lr_high: f64,
    pub lr_low: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden: usize,
    pub lambda: f64,
    pub mu: f64,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_dim: usize,
    pub gat_aggregates_neighbors: bool,
    pub w_s: f64,
    pub tp_threshold: f64,
    pub tp_similarity: SimilarityKind,
    pub seed: u64,
    pub use_cs: bool,
    pub use_es: bool,
    pub use_el: bool,
    pub use_bon: bool,
    pub use_gat: bool,
    pub use_os: bool,
    pub use_mva: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            lr_high: 1e-4,
            lr_low: 1e-3,
            max_epochs: 50,
            patience: 10,
            hidden: 32,
            lambda: 0.3,
            mu: 0.15,
            gat_layers: 1,
            gat_heads: 1,
            gat_dim: 32,
            gat_aggregates_neighbors: false,
            w_s: 1.0,
            tp_threshold: 0.75,
            tp_similarity: SimilarityKind::Levenshtein,
            seed: 0,
            use_cs: true,
            use_es: true,
            use_el: true,
            use_bon: true,
            use_gat: true,
            use_os: true,
            use_mva: true,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets one ablation by its table name (`cs`, `es`, `el`, `bon`, `gat`,
    /// `os`, `mva`) to off.
    pub fn disable(&mut self, view: &str) -> Result<(), ConfigError> {
        let flag = match view.trim().to_ascii_lowercase().as_str() {
            "cs" => &mut self.use_cs,
            "es" => &mut self.use_es,
            "el" => &mut self.use_el,
            "bon" => &mut self.use_bon,
            "gat" => &mut self.use_gat,
            "os" => &mut self.use_os,
            "mva" => &mut self.use_mva,
            other => {
                return Err(ConfigError::Invalid {
                    key: "ablation",
                    reason: format!("unknown view `{other}`"),
                })
            }
        };
        *flag = false;
        self.check()
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_owned(),
            })
        };
        if !(self.use_cs || self.use_es || self.use_el) {
            return bad("use_cs", "at least one retriever view must stay enabled");
        }
        if self.lambda < 0.0 || self.mu < 0.0 {
            return bad("lambda", "loss weights must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.w_s) || self.w_s == 0.0 {
            return bad("w_s", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tp_threshold) {
            return bad("tp_threshold", "must lie in [0, 1]");
        }
        if self.hidden == 0 || self.gat_dim == 0 || self.gat_layers == 0 || self.gat_heads == 0 {
            return bad("hidden", "layer sizes and counts must be positive");
        }
        if self.lr_high <= 0.0 || self.lr_low <= 0.0 {
            return bad("lr_high", "learning rates must be positive");
        }
        Ok(())
    }
}

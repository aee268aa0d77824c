//! Pipeline configuration with the defaults used throughout the crate.
//!
//! Every tunable named by a module lives here so a single document file
//! reproduces a run. Unknown keys are rejected at parse time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Budget B: number of boosting rounds / conditional repairs selected.
    pub budget: usize,
    pub test_fraction: f64,
    /// 1 = fully sequential reference mode.
    pub threads: usize,
    pub types: TypeInferenceConfig,
    pub detectors: DetectorConfig,
    pub repairs: RepairConfig,
    pub forest: ForestParams,
    pub embedding: EmbeddingParams,
    pub classifier: ClassifierParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 5,
            test_fraction: 0.2,
            threads: 1,
            types: TypeInferenceConfig::default(),
            detectors: DetectorConfig::default(),
            repairs: RepairConfig::default(),
            forest: ForestParams::default(),
            embedding: EmbeddingParams::default(),
            classifier: ClassifierParams::default(),
        }
    }
}

impl Config {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "test_fraction must be in (0,1), got {}",
                self.test_fraction
            )));
        }
        if self.threads == 0 {
            return Err(ConfigError::Invalid("threads must be >= 1".into()));
        }
        if self.forest.subsample < 2 {
            return Err(ConfigError::Invalid("forest.subsample must be >= 2".into()));
        }
        if self.forest.n_trees == 0 {
            return Err(ConfigError::Invalid("forest.n_trees must be >= 1".into()));
        }
        if !(self.forest.contamination > 0.0 && self.forest.contamination < 1.0) {
            return Err(ConfigError::Invalid(
                "forest.contamination must be in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypeInferenceConfig {
    /// Fraction of non-missing cells that must parse as floats for Numeric.
    pub numeric_threshold: f64,
    pub date_threshold: f64,
    pub address_threshold: f64,
    /// Categorical if distinct count <= max(categorical_max_distinct,
    /// categorical_distinct_fraction * rows).
    pub categorical_max_distinct: usize,
    pub categorical_distinct_fraction: f64,
}

impl Default for TypeInferenceConfig {
    fn default() -> Self {
        Self {
            numeric_threshold: 0.95,
            date_threshold: 0.95,
            address_threshold: 0.95,
            categorical_max_distinct: 20,
            categorical_distinct_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub missing: bool,
    pub types: bool,
    pub quantitative: bool,
    pub embedding: bool,
    /// The z-score rule constant: |v - mean| > z_score_sigma * stddev.
    pub z_score_sigma: f64,
    /// Extensible sentinel strings treated as missing-value markers.
    pub missing_sentinels: Vec<String>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            missing: true,
            types: true,
            quantitative: true,
            embedding: true,
            z_score_sigma: 5.0,
            missing_sentinels: vec!["-999".into(), "?".into(), "--".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    pub impute_mean: bool,
    pub impute_median: bool,
    pub impute_mode: bool,
    pub discard: bool,
    pub default_prediction: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            impute_mean: true,
            impute_median: true,
            impute_mode: true,
            discard: true,
            default_prediction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Per-tree subsample size psi.
    pub subsample: usize,
    /// Score threshold is set so this fraction of training points is flagged.
    pub contamination: f64,
    /// Number of attributes implicated per flagged record.
    pub top_m: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample: 256,
            contamination: 0.05,
            top_m: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_count: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 10,
            negatives: 5,
            learning_rate: 0.025,
            min_count: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Bag-of-words vocabulary size for Text columns.
    pub bag_of_words_k: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            n_trees: 25,
            max_depth: 8,
            min_leaf: 2,
            bag_of_words_k: 100,
        }
    }
}

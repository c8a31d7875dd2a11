//! Run configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_THRESHOLDS;
use crate::inference::DetectionConfig;
use crate::train::TrainConfig;
use crate::world::{AnnotatorConfig, ClassifierConfig, WorldConfig};

pub const SEED_ENV: &str = "ACTION_SEARCH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub checkpoints_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            checkpoints_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_videos: 200,
            val_videos: 50,
            test_videos: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorsConfig {
    pub per_class: usize,
}

impl Default for PriorsConfig {
    fn default() -> Self {
        PriorsConfig { per_class: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Per-video proposal budgets of the recall curves.
    pub budgets: Vec<usize>,
    /// Budget of the headline recall comparison; baselines draw this many
    /// proposals per video and ground-truth class.
    pub recall_budget: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            budgets: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            recall_budget: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub world: WorldConfig,
    pub annotator: AnnotatorConfig,
    pub classifier: ClassifierConfig,
    pub priors: PriorsConfig,
    pub train: TrainConfig,
    pub detect: DetectionConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
    }

    /// Read `path`, or the defaults when `path` is `None`, then apply the
    /// seed environment override.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text, p)?
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.annotator.validate()?;
        self.train.validate()?;
        self.detect.validate(self.world.num_classes as usize)?;
        if self.priors.per_class == 0 {
            return Err(Error::Config("priors.per_class must be >= 1".into()));
        }
        if self.eval.thresholds.is_empty() || self.eval.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("eval.thresholds must be non-empty and in (0, 1]".into()));
        }
        if self.eval.budgets.is_empty() || self.eval.budgets.contains(&0) || self.eval.recall_budget == 0 {
            return Err(Error::Config("eval budgets must be >= 1".into()));
        }
        if self.classifier.iterations == 0 {
            return Err(Error::Config("classifier.iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of the search-model fits, mixed with the run seed.
    pub fn train_seed(&self) -> u64 {
        crate::seed::derive(self.seed, &[self.train.seed])
    }

    pub fn classifier_seed(&self) -> u64 {
        crate::seed::derive(self.seed, &[self.classifier.seed])
    }
}

//! TOML experiment configuration and seed derivation.
//!
//! A single `master_seed` drives everything: every stochastic stage derives
//! its own seed by hashing the master seed with a stage label, so adding or
//! removing stages never perturbs the others.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contaminate::ContaminationSpec;
use crate::error::{Error, Result};
use crate::index::{DEFAULT_B, DEFAULT_K1};
use crate::model;
use crate::synthetic::SyntheticConfig;

/// Derive a stage seed from the master seed and a stage label.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub hidden: usize,
}

impl Default for ModelSection {
    // Wider than the scorer's own default: the extra hidden units give the
    // teacher room to memorize injected pairs.
    fn default() -> Self {
        Self {
            dim: model::DEFAULT_DIM,
            hidden: 96,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_queries: usize,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub teacher_group_size: usize,
    /// Teacher stream length in base groups (0 = whole base stream).
    pub teacher_group_count: usize,
    /// Distillation stream length for the score-matching losses, drawn from
    /// the base groups (0 = whole base stream).
    pub distill_group_count: usize,
    /// RankNet sampling: BM25 depth, group size and groups drawn per query.
    pub ranknet_topk: usize,
    pub ranknet_group_size: usize,
    pub ranknet_rounds_per_query: usize,
    pub kl_temperature: f64,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    // Desk-scale defaults, tuned so the default experiment shows the
    // contamination effects clearly. The short teacher stream matters: a
    // single-pass learner slowly overwrites what it memorized from the
    // injected groups, so the teacher stops while the memory is fresh while
    // students train on the full stream.
    fn default() -> Self {
        Self {
            batch_queries: 32,
            base_lr: 0.06,
            warmup_fraction: 0.10,
            teacher_group_size: 4,
            teacher_group_count: 1_600,
            distill_group_count: 0,
            ranknet_topk: 40,
            ranknet_group_size: 8,
            ranknet_rounds_per_query: 480,
            kl_temperature: 1.0,
            weight_decay: model::ADAM_WEIGHT_DECAY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub ndcg_k: usize,
    pub recall_k: usize,
    pub cutoff: u32,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let s = crate::metrics::MetricSettings::default();
        Self {
            ndcg_k: s.ndcg_k,
            recall_k: s.recall_k,
            cutoff: s.cutoff,
        }
    }
}

impl MetricsSection {
    pub fn settings(&self) -> crate::metrics::MetricSettings {
        crate::metrics::MetricSettings {
            ndcg_k: self.ndcg_k,
            recall_k: self.recall_k,
            cutoff: self.cutoff,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: String,
    pub synthetic: SyntheticConfig,
    pub model: ModelSection,
    pub index: IndexSection,
    pub train: TrainSection,
    pub metrics: MetricsSection,
    pub contamination: Vec<ContaminationSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            output_dir: "out".into(),
            synthetic: SyntheticConfig::default(),
            model: ModelSection::default(),
            index: IndexSection::default(),
            train: TrainSection::default(),
            metrics: MetricsSection::default(),
            contamination: vec![ContaminationSpec::new("synthetic")],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        if self.contamination.is_empty() {
            return Err(Error::Config("at least one [[contamination]] entry required".into()));
        }
        if self.train.batch_queries < 1 {
            return Err(Error::Config("batch_queries must be >= 1".into()));
        }
        if self.train.ranknet_topk < self.train.ranknet_group_size {
            return Err(Error::Config("ranknet_topk must be >= ranknet_group_size".into()));
        }
        if self.model.dim < 2 || self.model.hidden < 1 {
            return Err(Error::Config("model dims must be positive".into()));
        }
        Ok(())
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episodic::{EpisodeSpec, DEFAULT_QUERIES_PER_CLASS};
use crate::error::{Error, Result};
use crate::numerics::Rng64;
use crate::scorer::OptimizerConfig;
use crate::selection::DistanceKind;
use crate::store::EmbeddingStore;

pub const DEFAULT_EVAL_TASKS: usize = 1000;

/// Selected patch count used for 196-patch (224px, patch 16) stores.
const REFERENCE_M: usize = 96;
const REFERENCE_PATCHES: usize = 196;

/// Everything that determines a training or evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Store episodes are trained on.
    pub store: PathBuf,
    /// Store episodes are evaluated on; the training store when absent.
    pub eval_store: Option<PathBuf>,
    pub n_way: usize,
    pub k_shot: usize,
    pub queries_per_class: usize,
    /// Patches kept per image. When absent: the planted signal count for
    /// synthetic stores, otherwise 96/196 of the patch count.
    pub m: Option<usize>,
    pub distance: DistanceKind,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub eval_tasks: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
    pub hidden_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            store: PathBuf::new(),
            eval_store: None,
            n_way: 5,
            k_shot: 1,
            queries_per_class: DEFAULT_QUERIES_PER_CLASS,
            m: None,
            distance: DistanceKind::Cos,
            epochs: 5,
            episodes_per_epoch: 10,
            eval_tasks: DEFAULT_EVAL_TASKS,
            base_seed: 0,
            optimizer: OptimizerConfig::default(),
            hidden_dim: 64,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InvalidConfig("n_way must be at least 2".into()));
        }
        if self.k_shot == 0 || self.queries_per_class == 0 {
            return Err(Error::InvalidConfig("k_shot and queries must be positive".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        self.optimizer.validate()
    }

    /// The concrete `m` for `store`.
    pub fn resolve_m(&self, store: &EmbeddingStore) -> Result<usize> {
        let patches = store.patches_m();
        let m = match self.m {
            Some(m) => m,
            None => match store.ground_truth().and_then(|gt| gt.first()) {
                Some(signal) => signal.len(),
                None if patches == REFERENCE_PATCHES => REFERENCE_M,
                None => (patches * REFERENCE_M + REFERENCE_PATCHES / 2) / REFERENCE_PATCHES,
            },
        };
        if m > patches {
            return Err(Error::InvalidConfig(format!(
                "m = {m} exceeds the store's {patches} patches"
            )));
        }
        Ok(m)
    }

    /// MLP input width for a given `m`; `m = 0` scores class embeddings only.
    pub fn input_dim(m: usize) -> usize {
        let rows = m.max(1);
        rows * rows
    }

    fn derived_seed(&self, stream: u64) -> u64 {
        Rng64::split(self.base_seed, stream).next_u64()
    }

    pub fn head_seed(&self) -> u64 {
        self.derived_seed(0)
    }

    pub fn train_seed(&self) -> u64 {
        self.derived_seed(1)
    }

    pub fn eval_seed(&self) -> u64 {
        self.derived_seed(2)
    }

    pub fn episode_spec(&self, base_seed: u64, task_index: u64) -> EpisodeSpec {
        EpisodeSpec {
            n_way: self.n_way,
            k_shot: self.k_shot,
            queries_per_class: self.queries_per_class,
            task_index,
            base_seed,
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.epochs * self.episodes_per_epoch) as u64
    }

    /// Optimizer settings with the schedule length filled in.
    pub fn resolved_optimizer(&self) -> OptimizerConfig {
        let mut opt = self.optimizer.clone();
        if opt.total_steps == 0 {
            opt.total_steps = self.total_steps();
        }
        opt
    }

    pub fn load_train_store(&self) -> Result<EmbeddingStore> {
        EmbeddingStore::load(&self.store)
    }

    pub fn load_eval_store(&self) -> Result<EmbeddingStore> {
        EmbeddingStore::load(self.eval_store.as_ref().unwrap_or(&self.store))
    }
}

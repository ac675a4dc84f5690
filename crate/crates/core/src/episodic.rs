//! N-way K-shot episode sampling and prototype construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng64;
use crate::store::{EmbeddingRecord, EmbeddingStore};

pub const DEFAULT_QUERIES_PER_CLASS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries_per_class: usize,
    pub task_index: u64,
    pub base_seed: u64,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.queries_per_class < 1 {
            return Err(Error::InvalidConfig(format!(
                "episode needs n_way >= 2, k_shot >= 1, queries >= 1 (got {}, {}, {})",
                self.n_way, self.k_shot, self.queries_per_class
            )));
        }
        Ok(())
    }
}

/// One sampled task. Query labels are episode-local, in `0..n_way`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Store label of each episode-local class.
    pub class_map: Vec<u32>,
    pub prototypes: Vec<EmbeddingRecord>,
    pub queries: Vec<EmbeddingRecord>,
    pub support_ids: Vec<u64>,
}

/// Caches the per-class record index of a store so repeated sampling is cheap.
#[derive(Debug, Clone)]
pub struct EpisodeSampler<'a> {
    store: &'a EmbeddingStore,
    by_class: Vec<Vec<usize>>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(store: &'a EmbeddingStore) -> Self {
        Self {
            store,
            by_class: store.records_by_class(),
        }
    }

    pub fn store(&self) -> &'a EmbeddingStore {
        self.store
    }

    pub fn sample(&self, spec: &EpisodeSpec) -> Result<Episode> {
        spec.validate()?;
        let per_class = spec.k_shot + spec.queries_per_class;
        if self.by_class.len() < spec.n_way {
            return Err(Error::InsufficientClasses {
                needed: spec.n_way,
                available: self.by_class.len(),
            });
        }
        let eligible: Vec<usize> = (0..self.by_class.len())
            .filter(|&c| self.by_class[c].len() >= per_class)
            .collect();
        if eligible.len() < spec.n_way {
            return Err(Error::InsufficientRecords {
                needed: per_class,
                needed_classes: spec.n_way,
                eligible: eligible.len(),
            });
        }

        let mut rng = Rng64::split(spec.base_seed, spec.task_index);
        let picks = rng.sample_without_replacement(eligible.len(), spec.n_way);
        let records = self.store.records();

        let mut class_map = Vec::with_capacity(spec.n_way);
        let mut prototypes = Vec::with_capacity(spec.n_way);
        let mut queries = Vec::with_capacity(spec.n_way * spec.queries_per_class);
        let mut support_ids = Vec::with_capacity(spec.n_way * spec.k_shot);
        for (local, &pick) in picks.iter().enumerate() {
            let class = eligible[pick];
            let members = &self.by_class[class];
            let chosen = rng.sample_without_replacement(members.len(), per_class);
            let supports: Vec<&EmbeddingRecord> = chosen[..spec.k_shot]
                .iter()
                .map(|&i| &records[members[i]])
                .collect();
            support_ids.extend(supports.iter().map(|r| r.record_id));
            prototypes.push(build_prototype(&supports)?);
            queries.extend(chosen[spec.k_shot..].iter().map(|&i| EmbeddingRecord {
                label: local as u32,
                ..records[members[i]].clone()
            }));
            class_map.push(class as u32);
        }

        Ok(Episode {
            class_map,
            prototypes,
            queries,
            support_ids,
        })
    }
}

/// Samples one episode; see [`EpisodeSampler`] for repeated sampling.
pub fn sample_episode(store: &EmbeddingStore, spec: &EpisodeSpec) -> Result<Episode> {
    EpisodeSampler::new(store).sample(spec)
}

/// Position-wise mean of the supports' class and patch embeddings. The
/// result takes the id and label of the first support.
pub fn build_prototype(supports: &[&EmbeddingRecord]) -> Result<EmbeddingRecord> {
    let first = supports.first().ok_or(Error::EmptyInput)?;
    if supports.len() == 1 {
        return Ok((*first).clone());
    }
    let mut class_sum = vec![0.0; first.class_embedding.len()];
    let mut patch_sum = vec![0.0; first.patch_embeddings.len()];
    for r in supports {
        if r.class_embedding.len() != class_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: class_sum.len(),
                found: r.class_embedding.len(),
            });
        }
        if r.patch_embeddings.len() != patch_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: patch_sum.len(),
                found: r.patch_embeddings.len(),
            });
        }
        class_sum.iter_mut().zip(&r.class_embedding).for_each(|(s, v)| *s += v);
        patch_sum.iter_mut().zip(&r.patch_embeddings).for_each(|(s, v)| *s += v);
    }
    let k = supports.len() as f64;
    class_sum.iter_mut().for_each(|v| *v /= k);
    patch_sum.iter_mut().for_each(|v| *v /= k);
    Ok(EmbeddingRecord {
        record_id: first.record_id,
        label: first.label,
        class_embedding: class_sum,
        patch_embeddings: patch_sum,
    })
}

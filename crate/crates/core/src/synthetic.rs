//! Synthetic embedding stores with planted class-relevant patches.
//!
//! Each class gets a unit signal direction. A shared pool of distractor
//! directions is orthogonalized against the span of all signal directions,
//! so distractor patches carry no class information. Each record places `s`
//! signal patches at random positions (kept as ground truth) and fills the
//! rest with noisy distractors. The class embedding is the mean of all patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Rng64};
use crate::store::{EmbeddingRecord, EmbeddingStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub class_count: usize,
    pub records_per_class: usize,
    pub dim: usize,
    pub patches: usize,
    pub signal_patches: usize,
    pub signal_noise: f64,
    pub distractor_pool_size: usize,
    pub distractor_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            class_count: 5,
            records_per_class: 20,
            dim: 32,
            patches: 16,
            signal_patches: 4,
            signal_noise: 0.1,
            distractor_pool_size: 8,
            distractor_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.class_count == 0 || self.records_per_class == 0 || self.dim == 0 {
            return fail("class_count, records_per_class and dim must be positive".into());
        }
        if self.signal_patches == 0 || self.signal_patches > self.patches {
            return fail(format!(
                "need 1 <= signal_patches ({}) <= patches ({})",
                self.signal_patches, self.patches
            ));
        }
        if self.patches > u16::MAX as usize {
            return fail(format!("{} patches exceed the u16 index range", self.patches));
        }
        if !(self.signal_noise >= 0.0 && self.distractor_noise >= 0.0)
            || !self.signal_noise.is_finite()
            || !self.distractor_noise.is_finite()
        {
            return fail("noise scales must be finite and non-negative".into());
        }
        if self.distractor_pool_size + self.class_count > self.dim {
            return fail(format!(
                "distractor pool ({}) plus classes ({}) exceeds dim {}",
                self.distractor_pool_size, self.class_count, self.dim
            ));
        }
        if self.signal_patches < self.patches && self.distractor_pool_size == 0 {
            return fail("distractor patches requested with an empty pool".into());
        }
        Ok(())
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn gaussian(rng: &mut Rng64, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.normal()).collect()
}

fn perturbed(direction: &[f64], sigma: f64, rng: &mut Rng64) -> Vec<f64> {
    normalize(direction.iter().map(|&x| x + sigma * rng.normal()).collect())
}

/// Removes the components of `v` along each (orthonormal) basis vector.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= c * bi);
    }
}

/// Builds a store fully determined by `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<EmbeddingStore> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut dirs = Rng64::split(cfg.seed, 0);

    let signal: Vec<Vec<f64>> = (0..cfg.class_count)
        .map(|_| normalize(gaussian(&mut dirs, d)))
        .collect();

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(signal.len());
    for g in &signal {
        let mut v = g.clone();
        project_out(&mut v, &basis);
        // twice for numerical orthogonality
        project_out(&mut v, &basis);
        if norm(&v) > 1e-10 {
            basis.push(normalize(v));
        }
    }

    let distractors: Vec<Vec<f64>> = (0..cfg.distractor_pool_size)
        .map(|_| {
            let mut v = gaussian(&mut dirs, d);
            project_out(&mut v, &basis);
            project_out(&mut v, &basis);
            normalize(v)
        })
        .collect();

    let total = cfg.class_count * cfg.records_per_class;
    let mut records = Vec::with_capacity(total);
    let mut ground_truth = Vec::with_capacity(total);
    for (idx, label) in (0..cfg.class_count)
        .flat_map(|c| std::iter::repeat_n(c, cfg.records_per_class))
        .enumerate()
    {
        let mut rng = Rng64::split(cfg.seed, 1 + idx as u64);
        let mut positions = rng.sample_without_replacement(cfg.patches, cfg.signal_patches);
        positions.sort_unstable();

        let mut is_signal = vec![false; cfg.patches];
        for &p in &positions {
            is_signal[p] = true;
        }
        let mut flat = Vec::with_capacity(cfg.patches * d);
        let mut class_embedding = vec![0.0; d];
        for signal_here in is_signal {
            let patch = if signal_here {
                perturbed(&signal[label], cfg.signal_noise, &mut rng)
            } else {
                let j = rng.below(distractors.len() as u64) as usize;
                perturbed(&distractors[j], cfg.distractor_noise, &mut rng)
            };
            class_embedding.iter_mut().zip(&patch).for_each(|(c, p)| *c += p);
            flat.extend_from_slice(&patch);
        }
        let m = cfg.patches as f64;
        class_embedding.iter_mut().for_each(|c| *c /= m);

        records.push(EmbeddingRecord {
            record_id: idx as u64,
            label: label as u32,
            class_embedding,
            patch_embeddings: flat,
        });
        ground_truth.push(positions.into_iter().map(|p| p as u16).collect());
    }

    EmbeddingStore::new(d, cfg.patches, cfg.class_count, records, Some(ground_truth))
}

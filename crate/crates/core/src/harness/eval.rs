use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodic::EpisodeSampler;
use crate::error::{Error, Result};
use crate::numerics::argmax;
use crate::scorer::{query_scores, MlpHead};
use crate::store::EmbeddingStore;

use super::train::represent_episode;
use super::RunConfig;

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub queries_per_task: usize,
    pub per_task_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub ci95_half_width: f64,
    pub config: RunConfig,
    /// Not serialized, so report files depend only on inputs.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl EvalReport {
    pub fn from_accuracies(per_task_accuracy: Vec<f64>, queries_per_task: usize, config: RunConfig) -> Self {
        Self {
            tasks: per_task_accuracy.len(),
            queries_per_task,
            mean_accuracy: mean(&per_task_accuracy),
            ci95_half_width: ci95_half_width(&per_task_accuracy),
            per_task_accuracy,
            config,
            wall_time_secs: 0.0,
        }
    }

    pub fn ci_low(&self) -> f64 {
        self.mean_accuracy - self.ci95_half_width
    }

    pub fn ci_high(&self) -> f64 {
        self.mean_accuracy + self.ci95_half_width
    }

    pub fn summary(&self) -> String {
        format!(
            "{:.2} +- {:.2} % over {} tasks",
            100.0 * self.mean_accuracy,
            100.0 * self.ci95_half_width,
            self.tasks
        )
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// `1.96 * s / sqrt(T)` with the `T - 1` sample standard deviation; 0 for
/// fewer than two values.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let t = values.len();
    if t < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (t - 1) as f64;
    Z95 * var.sqrt() / (t as f64).sqrt()
}

/// Accuracy of `head` over `cfg.eval_tasks` episodes (task indices
/// `0..eval_tasks`). Tasks run in parallel; results are order-stable.
pub fn evaluate(head: &MlpHead, store: &EmbeddingStore, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if cfg.eval_tasks == 0 {
        return Err(Error::InvalidConfig("eval_tasks must be positive".into()));
    }
    let m = cfg.resolve_m(store)?;
    let expected = RunConfig::input_dim(m);
    if head.input_dim() != expected {
        return Err(Error::ShapeMismatch {
            expected: head.input_dim(),
            found: expected,
        });
    }
    let started = Instant::now();
    let sampler = EpisodeSampler::new(store);
    let seed = cfg.eval_seed();
    let accuracies: Vec<f64> = (0..cfg.eval_tasks as u64)
        .into_par_iter()
        .map(|task| {
            let episode = sampler.sample(&cfg.episode_spec(seed, task))?;
            let (protos, queries) = represent_episode(&episode, cfg.distance, m)?;
            let mut correct = 0usize;
            for (q, record) in queries.iter().zip(&episode.queries) {
                let scores = query_scores(head, q, &protos)?;
                correct += usize::from(argmax(&scores) == Some(record.label as usize));
            }
            Ok(correct as f64 / queries.len() as f64)
        })
        .collect::<Result<_>>()?;

    let config = RunConfig {
        m: Some(m),
        ..cfg.clone()
    };
    let mut report =
        EvalReport::from_accuracies(accuracies, cfg.n_way * cfg.queries_per_class, config);
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

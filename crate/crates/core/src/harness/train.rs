use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodic::{Episode, EpisodeSampler};
use crate::error::Result;
use crate::scorer::{episode_loss_and_grads, optimizer_step, HeadParams, MlpHead, QueryOutcome};
use crate::selection::{represent, DistanceKind, FusedRepresentation};
use crate::store::EmbeddingStore;

use super::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: MlpHead,
    pub log: TrainLog,
}

pub(super) fn represent_episode(
    episode: &Episode,
    kind: DistanceKind,
    m: usize,
) -> Result<(Vec<FusedRepresentation>, Vec<FusedRepresentation>)> {
    let protos = episode
        .prototypes
        .iter()
        .map(|p| represent(p, kind, m))
        .collect::<Result<Vec<_>>>()?;
    let queries = episode
        .queries
        .iter()
        .map(|q| represent(q, kind, m))
        .collect::<Result<Vec<_>>>()?;
    Ok((protos, queries))
}

/// Episodic training of a freshly initialized head: one optimizer step per
/// episode on the query-averaged gradient.
pub fn train(store: &EmbeddingStore, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let m = cfg.resolve_m(store)?;
    let mut head = MlpHead::new(RunConfig::input_dim(m), cfg.hidden_dim, cfg.head_seed());
    let optimizer = cfg.resolved_optimizer();
    let sampler = EpisodeSampler::new(store);
    let seed = cfg.train_seed();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        for e in 0..cfg.episodes_per_epoch {
            let task = (epoch * cfg.episodes_per_epoch + e) as u64;
            let episode = sampler.sample(&cfg.episode_spec(seed, task))?;
            let (protos, queries) = represent_episode(&episode, cfg.distance, m)?;

            let outcomes: Vec<QueryOutcome> = queries
                .par_iter()
                .zip(&episode.queries)
                .map(|(q, record)| episode_loss_and_grads(&head, q, &protos, record.label as usize))
                .collect::<Result<_>>()?;

            // reduced in query order so the sum does not depend on scheduling
            let mut grads = HeadParams::zeros(head.input_dim(), head.hidden());
            let mut correct = 0usize;
            let mut loss = 0.0;
            for (o, record) in outcomes.iter().zip(&episode.queries) {
                grads.add_assign(&o.grads);
                loss += o.loss;
                correct += usize::from(o.predicted == record.label as usize);
            }
            let n = outcomes.len() as f64;
            grads.scale(1.0 / n);
            optimizer_step(&mut head, &grads, &optimizer)?;
            loss_sum += loss / n;
            acc_sum += correct as f64 / n;
        }
        let episodes = cfg.episodes_per_epoch.max(1) as f64;
        log.epochs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / episodes,
            mean_accuracy: acc_sum / episodes,
        });
    }
    Ok(TrainOutcome { head, log })
}

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::DistanceKind;
use crate::store::EmbeddingStore;

use super::{evaluate, train, EvalReport, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub setting: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn point(&self, setting: &str) -> Option<&EvalReport> {
        self.points
            .iter()
            .find(|p| p.setting == setting)
            .map(|p| &p.report)
    }

    /// Aligned text table, one row per setting.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:>10}  {:>9}  {:>8}  {:>6}\n", self.axis, "acc (%)", "ci95", "tasks");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:>10}  {:>9.2}  {:>8.2}  {:>6}",
                p.setting,
                100.0 * p.report.mean_accuracy,
                100.0 * p.report.ci95_half_width,
                p.report.tasks
            );
        }
        out
    }
}

fn run_point(
    train_store: &EmbeddingStore,
    eval_store: &EmbeddingStore,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let outcome = train(train_store, cfg)?;
    evaluate(&outcome.head, eval_store, cfg)
}

fn ensure_distinct<T: Ord>(values: impl IntoIterator<Item = T>, len: usize) -> Result<()> {
    if values.into_iter().collect::<BTreeSet<_>>().len() != len {
        return Err(Error::InvalidConfig("sweep settings must be distinct".into()));
    }
    if len == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one setting".into()));
    }
    Ok(())
}

/// Full train + evaluate per `m`, in the order given.
pub fn sweep_m(
    train_store: &EmbeddingStore,
    eval_store: &EmbeddingStore,
    cfg: &RunConfig,
    values: &[usize],
) -> Result<SweepReport> {
    ensure_distinct(values.iter(), values.len())?;
    let points = values
        .iter()
        .map(|&m| {
            let point_cfg = RunConfig {
                m: Some(m),
                ..cfg.clone()
            };
            Ok(SweepPoint {
                setting: m.to_string(),
                report: run_point(train_store, eval_store, &point_cfg)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        axis: "m".into(),
        points,
    })
}

/// Full train + evaluate per distance kind, in the order given.
pub fn sweep_distance(
    train_store: &EmbeddingStore,
    eval_store: &EmbeddingStore,
    cfg: &RunConfig,
    kinds: &[DistanceKind],
) -> Result<SweepReport> {
    ensure_distinct(kinds.iter().map(|k| k.as_str()), kinds.len())?;
    let points = kinds
        .iter()
        .map(|&kind| {
            let point_cfg = RunConfig {
                distance: kind,
                ..cfg.clone()
            };
            Ok(SweepPoint {
                setting: kind.to_string(),
                report: run_point(train_store, eval_store, &point_cfg)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        axis: "distance".into(),
        points,
    })
}

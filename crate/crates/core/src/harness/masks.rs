use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::selection::{select_top, similarity_sequence, DistanceKind, SelectionMask};
use crate::store::EmbeddingStore;

use super::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskExport {
    pub record_id: u64,
    pub json_path: PathBuf,
    pub pgm_path: Option<PathBuf>,
    /// Fraction of planted signal patches selected, for synthetic stores.
    pub recall: Option<f64>,
}

fn recall(selected: &[usize], truth: &[u16]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = truth
        .iter()
        .filter(|&&t| selected.contains(&(t as usize)))
        .count();
    hits as f64 / truth.len() as f64
}

/// Writes `record_<id>.json` (and `record_<id>.pgm` for square patch grids)
/// into `out_dir` for each requested record.
pub fn export_masks(
    store: &EmbeddingStore,
    cfg: &RunConfig,
    record_ids: &[u64],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<MaskExport>> {
    let m = cfg.resolve_m(store)?;
    let positions = record_ids
        .iter()
        .map(|&id| store.position_of(id).ok_or(Error::UnknownRecord(id)))
        .collect::<Result<Vec<_>>>()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;

    let mut exports = Vec::with_capacity(positions.len());
    for pos in positions {
        let record = &store.records()[pos];
        let selection = select_top(&similarity_sequence(record, cfg.distance), m)?;
        let mask = SelectionMask::new(record.record_id, &selection);
        let json_path = out_dir.join(format!("record_{}.json", record.record_id));
        fs::write(&json_path, serde_json::to_vec_pretty(&mask)?)?;
        let pgm_path = match mask.to_pgm() {
            Some(pgm) => {
                let path = out_dir.join(format!("record_{}.pgm", record.record_id));
                fs::write(&path, pgm)?;
                Some(path)
            }
            None => None,
        };
        exports.push(MaskExport {
            record_id: record.record_id,
            json_path,
            pgm_path,
            recall: store
                .ground_truth()
                .map(|gt| recall(&selection.indices, &gt[pos])),
        });
    }
    Ok(exports)
}

/// Mean recall of planted signal patches at `m`, over every record of a
/// synthetic store. `None` without a ground-truth section.
pub fn selection_recall(store: &EmbeddingStore, kind: DistanceKind, m: usize) -> Result<Option<f64>> {
    let Some(gt) = store.ground_truth() else {
        return Ok(None);
    };
    if store.records().is_empty() {
        return Ok(Some(0.0));
    }
    let mut total = 0.0;
    for (record, truth) in store.records().iter().zip(gt) {
        let selection = select_top(&similarity_sequence(record, kind), m)?;
        total += recall(&selection.indices, truth);
    }
    Ok(Some(total / store.records().len() as f64))
}

//! Class-relevant patch selection: rank each patch by its similarity to the
//! image's class embedding, keep the top `m`, and fuse them with the class
//! embedding.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine_unchecked, dot, Mat64};
use crate::store::EmbeddingRecord;

/// Weight of the class embedding added to each selected patch.
pub const FUSION_CLASS_WEIGHT: f64 = 2.0;

/// Similarity used to rank patches. Distances (`Abs`, `Sqr`) are negated so
/// larger always means more similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Cos,
    Dot,
    Abs,
    Sqr,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [Self::Cos, Self::Dot, Self::Abs, Self::Sqr];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cos => "cos",
            Self::Dot => "dot",
            Self::Abs => "abs",
            Self::Sqr => "sqr",
        }
    }

    pub fn similarity(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Self::Cos => cosine_unchecked(u, v),
            Self::Dot => dot(u, v),
            Self::Abs => -u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            Self::Sqr => -u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cos" => Ok(Self::Cos),
            "dot" => Ok(Self::Dot),
            "abs" => Ok(Self::Abs),
            "sqr" => Ok(Self::Sqr),
            other => Err(Error::InvalidConfig(format!("unknown distance kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected patch indices, most similar first; ties by ascending index.
    pub indices: Vec<usize>,
    /// The full similarity sequence the selection was taken from.
    pub similarities: Vec<f64>,
}

/// Selected patches after fusion, one row per patch in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation {
    pub rows: Mat64,
    /// Empty for the class-only fallback (`m = 0`).
    pub source_indices: Vec<usize>,
}

impl FusedRepresentation {
    pub fn row_count(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Similarity of the class embedding to each patch.
pub fn similarity_sequence(record: &EmbeddingRecord, kind: DistanceKind) -> Vec<f64> {
    record
        .patches()
        .map(|p| kind.similarity(&record.class_embedding, p))
        .collect()
}

fn rank_order(similarities: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        similarities[b]
            .total_cmp(&similarities[a])
            .then_with(|| a.cmp(&b))
    }
}

/// The `m` most similar indices in descending order of similarity.
pub fn select_top(similarities: &[f64], m: usize) -> Result<SelectionResult> {
    let total = similarities.len();
    if m > total {
        return Err(Error::SelectionOutOfRange { m, patches: total });
    }
    let mut order: Vec<usize> = (0..total).collect();
    let cmp = rank_order(similarities);
    if m > 0 && m < total {
        order.select_nth_unstable_by(m - 1, &cmp);
    }
    order.truncate(m);
    order.sort_unstable_by(&cmp);
    Ok(SelectionResult {
        indices: order,
        similarities: similarities.to_vec(),
    })
}

/// Adds twice the class embedding to each selected patch. An empty selection
/// yields the class embedding alone as a single row.
pub fn fuse(record: &EmbeddingRecord, selection: &SelectionResult) -> Result<FusedRepresentation> {
    let d = record.dim();
    if selection.indices.is_empty() {
        return Ok(FusedRepresentation {
            rows: Mat64::from_vec(1, d, record.class_embedding.clone())?,
            source_indices: Vec::new(),
        });
    }
    let m_total = record.patch_count();
    let mut values = Vec::with_capacity(selection.indices.len() * d);
    for &i in &selection.indices {
        if i >= m_total {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: m_total,
            });
        }
        values.extend(
            record
                .patch(i)
                .iter()
                .zip(&record.class_embedding)
                .map(|(p, c)| p + FUSION_CLASS_WEIGHT * c),
        );
    }
    Ok(FusedRepresentation {
        rows: Mat64::from_vec(selection.indices.len(), d, values)?,
        source_indices: selection.indices.clone(),
    })
}

/// Similarity ranking, selection, and fusion in one step.
pub fn represent(
    record: &EmbeddingRecord,
    kind: DistanceKind,
    m: usize,
) -> Result<FusedRepresentation> {
    let sims = similarity_sequence(record, kind);
    fuse(record, &select_top(&sims, m)?)
}

/// JSON side of a mask export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub record_id: u64,
    pub m: usize,
    pub indices: Vec<usize>,
    pub similarities: Vec<f64>,
}

impl SelectionMask {
    pub fn new(record_id: u64, selection: &SelectionResult) -> Self {
        Self {
            record_id,
            m: selection.indices.len(),
            indices: selection.indices.clone(),
            similarities: selection.similarities.clone(),
        }
    }

    /// ASCII PGM (P2) with selected cells at 255, in row-major patch order.
    /// `None` unless the patch count is a perfect square.
    pub fn to_pgm(&self) -> Option<String> {
        let total = self.similarities.len();
        let side = (total as f64).sqrt().round() as usize;
        if side * side != total || total == 0 {
            return None;
        }
        let mut cells = vec![0u8; total];
        for &i in &self.indices {
            cells[i] = 255;
        }
        let mut out = format!("P2\n{side} {side}\n255\n");
        for row in cells.chunks(side) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng64;
    use proptest::prelude::*;

    fn rec(class: Vec<f64>, patches: &[Vec<f64>]) -> EmbeddingRecord {
        EmbeddingRecord::new(0, 0, class, patches).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let r = rec(vec![1.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(similarity_sequence(&r, DistanceKind::Dot), vec![1.0, 0.0]);
        assert_eq!(similarity_sequence(&r, DistanceKind::Abs), vec![0.0, -2.0]);
        assert_eq!(similarity_sequence(&r, DistanceKind::Sqr), vec![0.0, -2.0]);
        assert_eq!(similarity_sequence(&r, DistanceKind::Cos), vec![1.0, 0.0]);
        let same = rec(vec![0.3, 0.4], &vec![vec![0.3, 0.4]; 3]);
        assert_eq!(similarity_sequence(&same, DistanceKind::Cos), vec![1.0; 3]);
    }

    #[test]
    fn select_examples() {
        assert_eq!(select_top(&[0.1, 0.9, 0.5], 2).unwrap().indices, vec![1, 2]);
        assert_eq!(select_top(&[0.5, 0.5, 0.1], 1).unwrap().indices, vec![0]);
        assert_eq!(select_top(&[0.2, 0.9, 0.5], 3).unwrap().indices, vec![1, 2, 0]);
        assert!(select_top(&[0.2, 0.9], 0).unwrap().indices.is_empty());
        assert!(matches!(
            select_top(&[0.2], 2),
            Err(Error::SelectionOutOfRange { m: 2, patches: 1 })
        ));
    }

    #[test]
    fn fuse_examples() {
        let r = rec(vec![3.0, 4.0], &[vec![1.0, 2.0], vec![0.0, 0.0]]);
        let sel = SelectionResult {
            indices: vec![0, 1],
            similarities: vec![0.0; 2],
        };
        let f = fuse(&r, &sel).unwrap();
        assert_eq!(f.rows.row(0), &[7.0, 10.0]);
        assert_eq!(f.rows.row(1), &[6.0, 8.0]);
        assert_eq!(FUSION_CLASS_WEIGHT, 2.0);

        let empty = SelectionResult {
            indices: vec![],
            similarities: vec![0.0; 2],
        };
        let f = fuse(&r, &empty).unwrap();
        assert_eq!(f.row_count(), 1);
        assert_eq!(f.rows.row(0), &[3.0, 4.0]);

        let bad = SelectionResult {
            indices: vec![2],
            similarities: vec![0.0; 2],
        };
        assert!(matches!(fuse(&r, &bad), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn pgm_masks() {
        let sel = select_top(&[0.1, 0.9, 0.5, 0.3], 2).unwrap();
        let mask = SelectionMask::new(5, &sel);
        assert_eq!(mask.to_pgm().unwrap(), "P2\n2 2\n255\n0 255\n255 0\n");
        let odd = SelectionMask::new(5, &select_top(&[0.1, 0.2, 0.3], 1).unwrap());
        assert!(odd.to_pgm().is_none());
    }

    #[test]
    fn distance_kind_parsing() {
        for k in DistanceKind::ALL {
            assert_eq!(k.as_str().parse::<DistanceKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("l2".parse::<DistanceKind>().is_err());
    }

    fn random_record(rng: &mut Rng64, m: usize, d: usize) -> EmbeddingRecord {
        let class: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let patches: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.normal()).collect())
            .collect();
        rec(class, &patches)
    }

    proptest! {
        #[test]
        fn selection_separates(sims in proptest::collection::vec(-3i32..3, 1..32), m in 0usize..32) {
            let sims: Vec<f64> = sims.into_iter().map(f64::from).collect();
            let m = m % (sims.len() + 1);
            let sel = select_top(&sims, m).unwrap();
            let chosen: std::collections::BTreeSet<usize> = sel.indices.iter().copied().collect();
            prop_assert_eq!(chosen.len(), m);
            let min_in = sel.indices.iter().map(|&i| sims[i]).fold(f64::INFINITY, f64::min);
            for i in (0..sims.len()).filter(|i| !chosen.contains(i)) {
                prop_assert!(sims[i] <= min_in);
            }
        }

        #[test]
        fn cos_selection_scale_invariant(seed in any::<u64>(), alpha in 0.01f64..100.0) {
            let mut rng = Rng64::new(seed);
            let r = random_record(&mut rng, 12, 6);
            let mut scaled = r.clone();
            scaled.class_embedding.iter_mut().for_each(|x| *x *= alpha);
            let a = select_top(&similarity_sequence(&r, DistanceKind::Cos), 5).unwrap();
            let b = select_top(&similarity_sequence(&scaled, DistanceKind::Cos), 5).unwrap();
            prop_assert_eq!(a.indices, b.indices);
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), m in 0usize..=10) {
            let mut rng = Rng64::new(seed);
            let r = random_record(&mut rng, 10, 5);
            let perm = rng.sample_without_replacement(10, 10);
            // new position j holds old patch perm[j]
            let permuted_patches: Vec<Vec<f64>> = perm.iter().map(|&old| r.patch(old).to_vec()).collect();
            let p = rec(r.class_embedding.clone(), &permuted_patches);
            let fa = represent(&r, DistanceKind::Cos, m).unwrap();
            let fb = represent(&p, DistanceKind::Cos, m).unwrap();
            let mapped: Vec<usize> = fb.source_indices.iter().map(|&j| perm[j]).collect();
            prop_assert_eq!(&mapped, &fa.source_indices);
            // random normals give distinct similarities, so row order matches too
            prop_assert_eq!(fa.rows, fb.rows);
        }
    }
}

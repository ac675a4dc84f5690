//! Dense squared-cosine scoring, the MLP head, and its optimizer.

mod checkpoint;
mod mlp;
mod optim;

pub use checkpoint::{read_head, write_head, HEAD_MAGIC, HEAD_VERSION};
pub use mlp::{episode_loss_and_grads, query_scores, HeadParams, MlpHead, QueryOutcome};
pub use optim::{optimizer_step, OptimizerConfig, Schedule};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Mat64, DEGENERATE_NORM};
use crate::selection::FusedRepresentation;

/// Squared cosines between query rows and prototype rows; every entry is in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Mat64);

impl ScoreMatrix {
    pub fn matrix(&self) -> &Mat64 {
        &self.0
    }

    /// Row-major flattening, the MLP input order.
    pub fn flatten(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }
}

pub fn score_matrix(query: &FusedRepresentation, proto: &FusedRepresentation) -> Result<ScoreMatrix> {
    if query.dim() != proto.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            found: proto.dim(),
        });
    }
    if query.row_count() == 0 || proto.row_count() == 0 {
        return Err(Error::EmptyInput);
    }
    let q_norms: Vec<f64> = query.rows.row_iter().map(norm).collect();
    let p_norms: Vec<f64> = proto.rows.row_iter().map(norm).collect();
    let mut s = Mat64::zeros(query.row_count(), proto.row_count());
    for (i, (q, &qn)) in query.rows.row_iter().zip(&q_norms).enumerate() {
        for (j, (p, &pn)) in proto.rows.row_iter().zip(&p_norms).enumerate() {
            if qn < DEGENERATE_NORM || pn < DEGENERATE_NORM {
                continue;
            }
            let c = dot(q, p) / (qn * pn);
            s.set(i, j, (c * c).min(1.0));
        }
    }
    Ok(ScoreMatrix(s))
}

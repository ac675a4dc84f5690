use crate::error::{Error, Result};
use crate::numerics::{argmax, cross_entropy, softmax, Mat64, Rng64};
use crate::selection::FusedRepresentation;

use super::{score_matrix, ScoreMatrix};

/// One-hidden-layer rectified MLP parameters. The same shape doubles as the
/// gradient and optimizer-moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `hidden x input_dim`
    pub w1: Mat64,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w1: Mat64::zeros(hidden, input_dim),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// `[w1, b1, w2, b2]` as flat slices.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice(),
            &self.b1,
            &self.w2,
            std::slice::from_ref(&self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    pub fn add_assign(&mut self, other: &HeadParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &HeadParams) -> bool {
        self.input_dim() == other.input_dim() && self.hidden() == other.hidden()
    }
}

/// The trainable scorer: parameters plus AdamW state.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub params: HeadParams,
    pub first_moment: HeadParams,
    pub second_moment: HeadParams,
    pub step: u64,
}

impl MlpHead {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = Rng64::new(seed);
        let mut params = HeadParams::zeros(input_dim, hidden);
        let bound1 = 1.0 / (input_dim.max(1) as f64).sqrt();
        let bound2 = 1.0 / (hidden.max(1) as f64).sqrt();
        for v in params.w1.as_mut_slice().iter_mut().chain(&mut params.b1) {
            *v = rng.uniform(-bound1, bound1);
        }
        for v in params.w2.iter_mut() {
            *v = rng.uniform(-bound2, bound2);
        }
        params.b2 = rng.uniform(-bound2, bound2);
        Self::from_params(params)
    }

    pub fn from_params(params: HeadParams) -> Self {
        let (i, h) = (params.input_dim(), params.hidden());
        Self {
            params,
            first_moment: HeadParams::zeros(i, h),
            second_moment: HeadParams::zeros(i, h),
            step: 0,
        }
    }

    pub fn from_parts(
        params: HeadParams,
        first_moment: HeadParams,
        second_moment: HeadParams,
        step: u64,
    ) -> Result<Self> {
        if !params.same_shape(&first_moment) || !params.same_shape(&second_moment) {
            return Err(Error::ShapeMismatch {
                expected: params.input_dim(),
                found: first_moment.input_dim(),
            });
        }
        Ok(Self {
            params,
            first_moment,
            second_moment,
            step,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    fn check_input(&self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: flat.len(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations for one flattened score matrix.
    fn pre_activations(&self, flat: &[f64]) -> Vec<f64> {
        self.params
            .w1
            .row_iter()
            .zip(&self.params.b1)
            .map(|(row, b)| crate::numerics::dot(row, flat) + b)
            .collect()
    }

    fn output(&self, pre: &[f64]) -> f64 {
        pre.iter()
            .zip(&self.params.w2)
            .map(|(z, w)| z.max(0.0) * w)
            .sum::<f64>()
            + self.params.b2
    }

    pub fn forward_flat(&self, flat: &[f64]) -> Result<f64> {
        self.check_input(flat)?;
        Ok(self.output(&self.pre_activations(flat)))
    }

    /// Scalar similarity score for one query/prototype score matrix.
    pub fn forward(&self, s: &ScoreMatrix) -> Result<f64> {
        self.forward_flat(s.flatten())
    }
}

/// Per-class scores of one query against every prototype.
pub fn query_scores(
    head: &MlpHead,
    query: &FusedRepresentation,
    protos: &[FusedRepresentation],
) -> Result<Vec<f64>> {
    protos
        .iter()
        .map(|p| head.forward(&score_matrix(query, p)?))
        .collect()
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub grads: HeadParams,
}

/// Softmax cross-entropy over the per-prototype scores, with analytic
/// gradients for every head parameter. The rectifier's derivative at 0 is 0.
pub fn episode_loss_and_grads(
    head: &MlpHead,
    query: &FusedRepresentation,
    protos: &[FusedRepresentation],
    target: usize,
) -> Result<QueryOutcome> {
    if target >= protos.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: protos.len(),
        });
    }
    let mut inputs = Vec::with_capacity(protos.len());
    let mut pres = Vec::with_capacity(protos.len());
    let mut scores = Vec::with_capacity(protos.len());
    for p in protos {
        let s = score_matrix(query, p)?;
        head.check_input(s.flatten())?;
        let pre = head.pre_activations(s.flatten());
        scores.push(head.output(&pre));
        pres.push(pre);
        inputs.push(s);
    }
    let probs = softmax(&scores)?;
    let loss = cross_entropy(&probs, target)?;
    let predicted = argmax(&scores).unwrap_or(0);

    let mut grads = HeadParams::zeros(head.input_dim(), head.hidden());
    let w2 = &head.params.w2;
    for (n, (s, pre)) in inputs.iter().zip(&pres).enumerate() {
        // d loss / d score_n
        let g = probs[n] - if n == target { 1.0 } else { 0.0 };
        if g == 0.0 {
            continue;
        }
        grads.b2 += g;
        let x = s.flatten();
        for (h, &z) in pre.iter().enumerate() {
            if z <= 0.0 {
                continue;
            }
            grads.w2[h] += g * z;
            let dz = g * w2[h];
            if dz == 0.0 {
                continue;
            }
            grads.b1[h] += dz;
            let row = &mut grads.w1.as_mut_slice()[h * x.len()..(h + 1) * x.len()];
            row.iter_mut().zip(x).for_each(|(w, xi)| *w += dz * xi);
        }
    }

    Ok(QueryOutcome {
        loss,
        probs,
        predicted,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_matrix(values: Vec<f64>, rows: usize, cols: usize) -> ScoreMatrix {
        ScoreMatrix(Mat64::from_vec(rows, cols, values).unwrap())
    }

    #[test]
    fn bias_passthrough() {
        let mut params = HeadParams::zeros(4, 3);
        params.b2 = 0.7;
        let head = MlpHead::from_params(params);
        let s = flat_matrix(vec![0.2, 0.9, 0.1, 0.4], 2, 2);
        assert_eq!(head.forward(&s).unwrap(), 0.7);
    }

    #[test]
    fn hand_computed_forward() {
        // relu(0.5 * (1 + 0 + 0 + 1)) * 1 = 1
        let mut params = HeadParams::zeros(4, 1);
        params.w1 = Mat64::from_vec(1, 4, vec![0.5; 4]).unwrap();
        params.w2 = vec![1.0];
        let head = MlpHead::from_params(params);
        let s = flat_matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        assert_eq!(head.forward(&s).unwrap(), 1.0);
    }

    #[test]
    fn dead_rectifier_returns_output_bias() {
        let mut head = MlpHead::new(4, 8, 3);
        head.params.b1 = vec![-100.0; 8];
        let s = flat_matrix(vec![0.3, 1.0, 0.5, 0.9], 2, 2);
        assert_eq!(head.forward(&s).unwrap(), head.params.b2);
    }

    #[test]
    fn input_shape_checked() {
        let head = MlpHead::new(4, 2, 0);
        let s = flat_matrix(vec![0.0; 9], 3, 3);
        assert!(matches!(head.forward(&s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn init_within_bounds_and_seeded() {
        let head = MlpHead::new(16, 8, 11);
        assert!(head.params.w1.as_slice().iter().all(|v| v.abs() <= 0.25));
        assert!(head.params.w2.iter().all(|v| v.abs() <= 1.0 / 8f64.sqrt()));
        assert_eq!(head, MlpHead::new(16, 8, 11));
        assert_ne!(head, MlpHead::new(16, 8, 12));
    }

    fn rep(rows: Vec<Vec<f64>>) -> FusedRepresentation {
        FusedRepresentation {
            source_indices: (0..rows.len()).collect(),
            rows: Mat64::from_rows(&rows).unwrap(),
        }
    }

    #[test]
    fn identical_scores_give_ln_n() {
        let head = MlpHead::new(4, 5, 1);
        let q = rep(vec![vec![1.0, 0.2], vec![0.1, 1.0]]);
        let protos = vec![q.clone(); 5];
        let out = episode_loss_and_grads(&head, &q, &protos, 2).unwrap();
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
        // softmax gradient sums to zero across classes, so b2 gets none
        assert_eq!(out.grads.b2, 0.0);
    }

    #[test]
    fn zero_output_weights_block_first_layer_gradient() {
        let mut head = MlpHead::new(4, 6, 2);
        head.params.w2 = vec![0.0; 6];
        let q = rep(vec![vec![1.0, 0.2], vec![0.1, 1.0]]);
        let protos = vec![
            rep(vec![vec![1.0, 0.0], vec![0.5, 0.5]]),
            rep(vec![vec![0.0, 1.0], vec![0.9, 0.1]]),
        ];
        let out = episode_loss_and_grads(&head, &q, &protos, 0).unwrap();
        assert!(out.grads.w1.as_slice().iter().all(|&g| g == 0.0));
        assert!(out.grads.b1.iter().all(|&g| g == 0.0));
        assert!(matches!(
            episode_loss_and_grads(&head, &q, &protos, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}

//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use cpes::{generate_synthetic, EmbeddingStore, FusedRepresentation, MlpHead, RunConfig, SyntheticConfig};

/// Frozen generator settings for the selected-patch-count trend: tuned once
/// by oracle runs, then fixed.
pub fn trend_config(class_count: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        class_count,
        records_per_class: 40,
        dim: 32,
        patches: 16,
        signal_patches: 4,
        signal_noise: 0.1,
        distractor_pool_size: 8,
        distractor_noise: 0.3,
        seed,
    }
}

pub const TREND_TRAIN_SEED: u64 = 111;
pub const TREND_EVAL_SEED: u64 = 112;

pub fn trend_stores() -> (EmbeddingStore, EmbeddingStore) {
    (
        generate_synthetic(&trend_config(20, TREND_TRAIN_SEED)).unwrap(),
        generate_synthetic(&trend_config(5, TREND_EVAL_SEED)).unwrap(),
    )
}

/// Frozen training budget for the trend runs.
pub fn trend_run(base_seed: u64) -> RunConfig {
    RunConfig {
        epochs: 5,
        episodes_per_epoch: 10,
        eval_tasks: 200,
        base_seed,
        ..RunConfig::default()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        s += u[i] * v[i];
    }
    s
}

/// Brute-force squared-cosine matrix, row-major.
pub fn oracle_scores(q: &FusedRepresentation, p: &FusedRepresentation) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..q.rows.rows() {
        for j in 0..p.rows.rows() {
            let a = q.rows.row(i);
            let b = p.rows.row(j);
            let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
            out.push(c * c);
        }
    }
    out
}

/// Head output written out loop by loop.
pub fn oracle_forward(head: &MlpHead, x: &[f64]) -> f64 {
    let p = &head.params;
    let mut out = p.b2;
    for h in 0..p.hidden() {
        let mut z = p.b1[h];
        for (i, xi) in x.iter().enumerate() {
            z += p.w1.get(h, i) * xi;
        }
        if z > 0.0 {
            out += p.w2[h] * z;
        }
    }
    out
}

/// Cross-entropy of the softmax over per-prototype scores, computed without
/// the library's softmax.
pub fn oracle_loss(head: &MlpHead, q: &FusedRepresentation, protos: &[FusedRepresentation], target: usize) -> f64 {
    let scores: Vec<f64> = protos
        .iter()
        .map(|p| oracle_forward(head, &oracle_scores(q, p)))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    log_z - scores[target]
}

/// Flat views of every head parameter tensor, in `[w1, b1, w2, b2]` order.
pub fn param_count(head: &MlpHead) -> [usize; 4] {
    head.params.tensors().map(<[f64]>::len)
}

pub fn param_mut(head: &mut MlpHead, tensor: usize, index: usize) -> &mut f64 {
    let [w1, b1, w2, b2] = head.params.tensors_mut();
    match tensor {
        0 => &mut w1[index],
        1 => &mut b1[index],
        2 => &mut w2[index],
        _ => &mut b2[index],
    }
}

/// Central finite difference of [`oracle_loss`] with respect to one parameter.
///
/// Evaluating the loss twice and subtracting leaves ~1e-10 of rounding noise
/// at a 1e-6 step, which swamps small gradients. Here the perturbation is
/// pushed through the network as per-prototype score deltas, so the
/// difference `L(θ+h) - L(θ-h)` is formed without cancelling large terms.
pub fn numeric_grad(
    head: &MlpHead,
    q: &FusedRepresentation,
    protos: &[FusedRepresentation],
    target: usize,
    tensor: usize,
    index: usize,
    step: f64,
) -> f64 {
    let p = &head.params;
    let inputs: Vec<Vec<f64>> = protos.iter().map(|pr| oracle_scores(q, pr)).collect();
    let scores: Vec<f64> = inputs.iter().map(|x| oracle_forward(head, x)).collect();
    let pre = |x: &[f64], h: usize| p.b1[h] + dot(p.w1.row(h), x);
    let relu = |z: f64| z.max(0.0);
    // score change of each prototype when the parameter moves by `d`
    let delta = |x: &[f64], d: f64| -> f64 {
        match tensor {
            0 | 1 => {
                let (h, scale) = if tensor == 0 {
                    (index / p.input_dim(), x[index % p.input_dim()])
                } else {
                    (index, 1.0)
                };
                let z = pre(x, h);
                let dz = d * scale;
                let change = if z > 0.0 && z + dz > 0.0 { dz } else { relu(z + dz) - relu(z) };
                p.w2[h] * change
            }
            2 => d * relu(pre(x, index)),
            _ => d,
        }
    };
    let up: Vec<f64> = inputs.iter().map(|x| delta(x, step)).collect();
    let down: Vec<f64> = inputs.iter().map(|x| delta(x, -step)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    // log of the partition-function ratio against the unperturbed scores
    let log_ratio = |ds: &[f64]| -> f64 {
        let mix: f64 = weights.iter().zip(ds).map(|(w, d)| w / total * d.exp_m1()).sum();
        mix.ln_1p()
    };
    let diff = log_ratio(&up) - log_ratio(&down) - (up[target] - down[target]);
    diff / (2.0 * step)
}

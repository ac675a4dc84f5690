//! AdamW with an optional cosine learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::{HeadParams, MlpHead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Half-cosine from the peak rate down to `floor` at `total_steps`.
    Cosine { floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    /// Length of the schedule; 0 lets the trainer fill in its step count.
    pub total_steps: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            schedule: Schedule::Cosine { floor: 1e-6 },
            total_steps: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_beta = |b: f64| (0.0..1.0).contains(&b);
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be positive");
        }
        if !ok_beta(self.beta1) || !ok_beta(self.beta2) {
            problems.push("betas must lie in [0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            problems.push("epsilon must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            problems.push("weight_decay must be non-negative");
        }
        if let Schedule::Cosine { floor } = self.schedule {
            if !(floor >= 0.0 && floor <= self.learning_rate) {
                problems.push("cosine floor must lie in [0, learning_rate]");
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Learning rate used by the update that moves the step counter from `t`
    /// to `t + 1`.
    pub fn lr_at(&self, t: u64) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine { floor } => {
                if self.total_steps == 0 {
                    return self.learning_rate;
                }
                if t >= self.total_steps {
                    return floor;
                }
                let progress = t as f64 / self.total_steps as f64;
                floor
                    + (self.learning_rate - floor)
                        * 0.5
                        * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// One AdamW update in place: bias-corrected moments, then
/// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn optimizer_step(head: &mut MlpHead, grads: &HeadParams, cfg: &OptimizerConfig) -> Result<()> {
    if grads.input_dim() != head.input_dim() || grads.hidden() != head.hidden() {
        return Err(Error::ShapeMismatch {
            expected: head.input_dim(),
            found: grads.input_dim(),
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let lr = cfg.lr_at(head.step);
    let t = head.step + 1;
    let bias1 = 1.0 - cfg.beta1.powf(t as f64);
    let bias2 = 1.0 - cfg.beta2.powf(t as f64);

    let MlpHead {
        params,
        first_moment,
        second_moment,
        ..
    } = head;
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(first_moment.tensors_mut())
        .zip(second_moment.tensors_mut())
        .zip(grads.tensors());
    for (((p, m), v), g) in tensors {
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * *p);
        }
    }
    head.step = t;
    Ok(())
}

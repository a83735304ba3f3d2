use serde::{Deserialize, Serialize};

use super::{DenseMatrix, GcnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Steps of linear learning-rate warmup; the rate is constant afterwards.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { base_lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, warmup_steps: 50 }
    }
}

impl AdamConfig {
    /// Learning rate used for the `step`-th update (1-based).
    pub fn learning_rate(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.base_lr;
        }
        self.base_lr * (step as f64 / self.warmup_steps as f64).min(1.0)
    }
}

/// First/second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub config: AdamConfig,
}

impl TrainState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a DenseMatrix>) -> Self {
        let first_moment: Vec<DenseMatrix> = params.into_iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        TrainState { step: 0, second_moment: first_moment.clone(), first_moment, config }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn optimizer_step(state: &mut TrainState, params: &mut [&mut DenseMatrix], grads: &[&DenseMatrix]) -> Result<(), GcnError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(GcnError::ShapeMismatch {
            index: params.len().min(grads.len()),
            param: (params.len(), 0),
            other: (grads.len(), state.first_moment.len()),
        });
    }
    for (index, (p, g)) in params.iter().zip(grads).enumerate() {
        let moment = &state.first_moment[index];
        if p.shape() != g.shape() || p.shape() != moment.shape() {
            let other = if p.shape() != g.shape() { g.shape() } else { moment.shape() };
            return Err(GcnError::ShapeMismatch { index, param: p.shape(), other });
        }
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, epsilon, .. } = state.config;
    let lr = state.config.learning_rate(state.step);
    let correction1 = 1.0 - beta1.powf(state.step as f64);
    let correction2 = 1.0 - beta2.powf(state.step as f64);

    for (index, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[index].data_mut();
        let v = state.second_moment[index].data_mut();
        for (((w, &grad), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * grad;
            *v = beta2 * *v + (1.0 - beta2) * grad * grad;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

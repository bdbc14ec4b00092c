//! Trainable parameters and the Adam update.

use super::tensor::Tensor;

/// A trainable tensor with its gradient accumulator and Adam moment buffers.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    m1: Tensor,
    m2: Tensor,
    step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape.clone()),
            m1: Tensor::zeros(shape.clone()),
            m2: Tensor::zeros(shape),
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Adam hyper-parameters. `weight_decay` is an L2 term added to the gradient
/// as `λ·w` before the moment updates.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4 }
    }
}

/// One Adam step over `params`, consuming each parameter's accumulated
/// gradient. Bias-corrected first and second moments.
pub fn adam_step(params: &mut [Parameter], cfg: &AdamConfig) {
    for p in params.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let n = p.value.numel();
        for i in 0..n {
            let g = p.grad.data()[i] + cfg.weight_decay * p.value.data()[i];
            let m1 = cfg.beta1 * p.m1.data()[i] + (1.0 - cfg.beta1) * g;
            let m2 = cfg.beta2 * p.m2.data()[i] + (1.0 - cfg.beta2) * g * g;
            p.m1.data_mut()[i] = m1;
            p.m2.data_mut()[i] = m2;
            let m1_hat = m1 / bc1;
            let m2_hat = m2 / bc2;
            p.value.data_mut()[i] -= cfg.lr * m1_hat / (m2_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_leaves_params() {
        let mut ps = vec![Parameter::new("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap())];
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        adam_step(&mut ps, &cfg);
        assert_eq!(ps[0].value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // w=1, g=1: bias-corrected m1_hat = 1, m2_hat = 1, so the step is lr/(1+eps)
        let mut ps = vec![Parameter::new("w", Tensor::new(vec![1], vec![1.0]).unwrap())];
        ps[0].grad.data_mut()[0] = 1.0;
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.0 };
        adam_step(&mut ps, &cfg);
        let w = ps[0].value.data()[0];
        assert!((w - 0.9).abs() < 1e-6, "got {w}");
    }

    #[test]
    fn paper_learning_rate_is_representable() {
        let cfg = AdamConfig { lr: 0.00015, ..AdamConfig::default() };
        assert_eq!(cfg.lr, 0.00015);
    }
}

//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam with decoupled weight decay.
    AdaptiveMoments {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::AdaptiveMoments {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: default_weight_decay(),
        }
    }
}

/// Optimizer state. The learning rate ramps linearly over `warmup_steps`
/// and is constant afterwards.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    warmup_steps: u64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, warmup_steps: u64, n_params: usize) -> Self {
        let moments = matches!(kind, OptimizerKind::AdaptiveMoments { .. });
        Self {
            kind,
            learning_rate,
            warmup_steps,
            step: 0,
            first_moment: if moments { vec![0.0; n_params] } else { Vec::new() },
            second_moment: if moments { vec![0.0; n_params] } else { Vec::new() },
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate that the next call to [`Optimizer::step`] will use.
    pub fn current_lr(&self) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        let frac = ((self.step + 1) as f64 / self.warmup_steps as f64).min(1.0);
        self.learning_rate * frac
    }

    /// Applies one descent step in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        let lr = self.current_lr();
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdaptiveMoments { beta1, beta2, eps, weight_decay } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *p);
                }
            }
        }
    }
}

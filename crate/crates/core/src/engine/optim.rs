use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::{ParamId, ParamStore};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        learning_rate: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    Adam {
        learning_rate: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        epsilon: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::Sgd {
            learning_rate,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::Adam {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        match &mut self {
            Self::Sgd { weight_decay, .. } | Self::Adam { weight_decay, .. } => *weight_decay = wd,
        }
        self
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    first: Tensor<T>,
    second: Tensor<T>,
    steps: u64,
}

/// Optimizer hyper-parameters plus per-parameter moment buffers.
///
/// Weight decay is the L2 form: `g <- g + wd * p` before the update.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    moments: HashMap<ParamId, Moments<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            moments: HashMap::new(),
        }
    }

    /// Applies one update to every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (id, grad) in grads.params() {
            if store.get(id).trainable {
                self.update(id, store.value_mut(id), grad)?;
            }
        }
        Ok(())
    }

    pub fn update(&mut self, id: ParamId, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                lhs: param.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        let slot = self.moments.entry(id).or_insert_with(|| Moments {
            first: Tensor::zeros(param.shape()),
            second: Tensor::zeros(param.shape()),
            steps: 0,
        });
        if slot.first.shape() != param.shape() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                lhs: slot.first.shape().to_vec(),
                rhs: param.shape().to_vec(),
            });
        }
        slot.steps += 1;
        match self.config {
            OptimizerConfig::Sgd {
                learning_rate,
                momentum,
                weight_decay,
            } => {
                let (lr, mu, wd) = (T::lit(learning_rate), T::lit(momentum), T::lit(weight_decay));
                let velocity = slot.first.data_mut();
                for ((p, &g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(velocity) {
                    let g = g + wd * *p;
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                let t = slot.steps as i32;
                let bias1 = T::lit(1.0 - beta1.powi(t));
                let bias2 = T::lit(1.0 - beta2.powi(t));
                let (lr, b1, b2, eps, wd) = (
                    T::lit(learning_rate),
                    T::lit(beta1),
                    T::lit(beta2),
                    T::lit(epsilon),
                    T::lit(weight_decay),
                );
                let (m, v) = (slot.first.data_mut(), slot.second.data_mut());
                for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
                    let g = g + wd * *p;
                    m[i] = b1 * m[i] + (T::one() - b1) * g;
                    v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

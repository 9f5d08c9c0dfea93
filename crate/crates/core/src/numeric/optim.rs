//! Gradient descent, Adam and AdamW over a [`Module`]'s parameters.

use serde::{Deserialize, Serialize};

use super::param::Module;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
    AdamW,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (applied for AdamW and SGD).
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer with per-parameter state, keyed by visitation order.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    t: u64,
    state: Vec<Moments>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            t: 0,
            state: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients currently stored in `model`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, model: &mut dyn Module) -> Result<()> {
        let mut bad = None;
        model.visit("", &mut |path, p| {
            if bad.is_none() && p.trainable && !p.grad.is_finite() {
                bad = Some(path.to_string());
            }
        });
        if let Some(path) = bad {
            return Err(Error::Training {
                location: path,
                message: "non-finite gradient".into(),
            });
        }

        self.t += 1;
        let cfg = self.config.clone();
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let state = &mut self.state;
        let mut idx = 0;
        model.visit_mut("", &mut |_, p| {
            if state.len() <= idx {
                state.push(Moments::default());
            }
            let st = &mut state[idx];
            idx += 1;
            if !p.trainable {
                return;
            }
            let n = p.value.len();
            let grad = p.grad.data().to_vec();
            let value = p.value.data_mut();
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in value.iter_mut().zip(&grad) {
                        *w -= cfg.lr * (g + cfg.weight_decay * *w);
                    }
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    if st.m.len() != n {
                        st.m = vec![0.0; n];
                        st.v = vec![0.0; n];
                    }
                    let decay = if cfg.kind == OptimizerKind::AdamW {
                        cfg.weight_decay
                    } else {
                        0.0
                    };
                    for i in 0..n {
                        let g = grad[i];
                        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
                        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
                        let mhat = st.m[i] / bc1;
                        let vhat = st.v[i] / bc2;
                        value[i] -= cfg.lr * (mhat / (vhat.sqrt() + cfg.eps) + decay * value[i]);
                    }
                }
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::param::Parameter;
    use crate::numeric::tensor::Tensor;

    fn param(w: f64, g: f64) -> Parameter {
        let mut p = Parameter::new(Tensor::vector(vec![w]));
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn plain_descent() {
        let mut p = param(1.0, 0.5);
        let mut opt = Optimizer::new(OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.1,
            ..Default::default()
        });
        opt.step(&mut p).unwrap();
        assert!((p.value.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::AdamW] {
            let mut p = param(0.7, 0.0);
            let mut opt = Optimizer::new(OptimizerConfig {
                kind,
                ..Default::default()
            });
            opt.step(&mut p).unwrap();
            assert_eq!(p.value.data()[0], 0.7, "{kind:?}");
        }
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        // t=1: m̂ = g, v̂ = g², update = lr·g/(|g|+eps) = 1e-3/(1+1e-8)
        let mut p = param(0.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default());
        opt.step(&mut p).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adamw_decays_weights() {
        let mut p = param(2.0, 0.0);
        let mut opt = Optimizer::new(OptimizerConfig {
            kind: OptimizerKind::AdamW,
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        });
        opt.step(&mut p).unwrap();
        assert!((p.value.data()[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_reported_with_path() {
        let mut p = param(1.0, f64::NAN);
        let mut opt = Optimizer::new(OptimizerConfig::default());
        let err = opt.step(&mut p).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
        assert_eq!(p.value.data()[0], 1.0);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut p = param(1.0, 1.0);
        p.trainable = false;
        Optimizer::new(OptimizerConfig::default()).step(&mut p).unwrap();
        assert_eq!(p.value.data()[0], 1.0);
    }
}

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// A learnable tensor together with its gradient buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters addressable by a slash-separated path.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter));
}

impl Module for Parameter {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        f(prefix, self)
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(prefix, self)
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

pub fn zero_grads(m: &mut dyn Module) {
    m.visit_mut("", &mut |_, p| p.zero_grad());
}

pub fn param_count(m: &dyn Module) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, p| n += p.len());
    n
}

pub fn param_paths(m: &dyn Module) -> Vec<String> {
    let mut out = Vec::new();
    m.visit("", &mut |path, _| out.push(path.to_string()));
    out
}

/// Copies every parameter value; used to compare states before and after a step.
pub fn snapshot(m: &dyn Module) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    m.visit("", &mut |path, p| out.push((path.to_string(), p.value.data().to_vec())));
    out
}

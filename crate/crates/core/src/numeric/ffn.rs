//! Fully connected feed-forward blocks with explicit backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{sigmoid, softmax_backward, softmax_slice};
use super::param::{join, Module, Parameter};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hidden widths used by experts, gates and per-head networks.
pub const DEFAULT_HIDDEN: [usize; 2] = [8, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    fn apply_row(self, row: &mut [f64]) {
        match self {
            Activation::Relu => row.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => row.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => softmax_slice(row),
            Activation::Identity => {}
        }
    }

    /// Converts the gradient w.r.t. the activation output into the gradient
    /// w.r.t. its input, given the output row `out`.
    fn backward_row(self, out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, o) in grad.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, o) in grad.iter_mut().zip(out) {
                    *g *= o * (1.0 - o);
                }
            }
            Activation::Softmax => {
                let dx = softmax_backward(out, grad);
                grad.copy_from_slice(&dx);
            }
            Activation::Identity => {}
        }
    }
}

/// Affine layer `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let w = (0..input * output)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Parameter::new(Tensor::new(vec![input, output], w).expect("shape")),
            bias: Parameter::new(Tensor::zeros(&[output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    /// Sets `W` to the identity (square layers only) and `b` to zero.
    pub fn set_identity(&mut self) {
        let (i, o) = (self.input_dim(), self.output_dim());
        assert_eq!(i, o, "identity init needs a square layer");
        let w = self.weight.value.data_mut();
        w.fill(0.0);
        for d in 0..i {
            w[d * o + d] = 1.0;
        }
        self.bias.value.fill(0.0);
    }

    /// `x: [n, in]` (flat, row-major) into `out: [n, out]`.
    pub fn affine(&self, x: &[f64], n: usize, out: &mut Vec<f64>) {
        let (din, dout) = (self.input_dim(), self.output_dim());
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        out.clear();
        out.reserve(n * dout);
        for r in 0..n {
            out.extend_from_slice(b);
            let orow = &mut out[r * dout..(r + 1) * dout];
            for (i, &xv) in x[r * din..(r + 1) * din].iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, wv) in orow.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                    *o += xv * wv;
                }
            }
        }
    }

    /// Accumulates parameter gradients for pre-activation gradient `dz` and
    /// returns the input gradient.
    pub fn affine_backward(&mut self, x: &[f64], n: usize, dz: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.input_dim(), self.output_dim());
        let mut dx = vec![0.0; n * din];
        {
            let gw = self.weight.grad.data_mut();
            for r in 0..n {
                let dzr = &dz[r * dout..(r + 1) * dout];
                for (i, &xv) in x[r * din..(r + 1) * din].iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (g, d) in gw[i * dout..(i + 1) * dout].iter_mut().zip(dzr) {
                        *g += xv * d;
                    }
                }
            }
        }
        let gb = self.bias.grad.data_mut();
        let w = self.weight.value.data();
        for r in 0..n {
            let dzr = &dz[r * dout..(r + 1) * dout];
            for (g, d) in gb.iter_mut().zip(dzr) {
                *g += d;
            }
            for (i, dxi) in dx[r * din..(r + 1) * din].iter_mut().enumerate() {
                *dxi = dzr
                    .iter()
                    .zip(&w[i * dout..(i + 1) * dout])
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        dx
    }
}

impl Module for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Stack of [`Dense`] layers. `widths` lists every layer's output width, the
/// last entry being the block's output width. The input width is bound on the
/// first call to [`FeedForwardBlock::bind`] or [`FeedForwardBlock::forward_mut`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedForwardBlock {
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
    seed: u64,
    layers: Vec<Dense>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct FfnCache {
    n: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl FfnCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }
}

impl FeedForwardBlock {
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, seed: u64) -> Self {
        assert!(!widths.is_empty() && widths.iter().all(|&w| w > 0));
        Self {
            widths: widths.to_vec(),
            hidden,
            output,
            seed,
            layers: Vec::new(),
        }
    }

    /// Convenience: construct and bind in one go.
    pub fn with_input(
        input: usize,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Self {
        let mut b = Self::new(widths, hidden, output, seed);
        b.bind(input).expect("fresh block binds");
        b
    }

    pub fn is_bound(&self) -> bool {
        !self.layers.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn bind(&mut self, input: usize) -> Result<()> {
        if let Some(d) = self.input_dim() {
            if d != input {
                return Err(Error::dim("FeedForwardBlock::bind", &[d], &[input]));
            }
            return Ok(());
        }
        if input == 0 {
            return Err(Error::Domain("zero input width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut din = input;
        for &w in &self.widths {
            self.layers.push(Dense::new(din, w, &mut rng));
            din = w;
        }
        Ok(())
    }

    /// Binds the input width from `x` if needed, then runs the forward pass.
    pub fn forward_mut(&mut self, x: &Tensor) -> Result<Tensor> {
        self.bind(x.last_dim())?;
        self.forward(x)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let din = self.check_input(x.last_dim())?;
        let n = x.len() / din;
        let cache = self.forward_flat(x.data(), n)?;
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.output_dim();
        Tensor::new(shape, cache.outputs.last().unwrap().clone())
    }

    fn check_input(&self, got: usize) -> Result<usize> {
        match self.input_dim() {
            None => Err(Error::Domain("feed-forward block used before binding".into())),
            Some(d) if d != got => Err(Error::dim("FeedForwardBlock::forward", &[d], &[got])),
            Some(d) => Ok(d),
        }
    }

    /// Forward over `n` rows of flat row-major input, keeping the cache.
    pub fn forward_flat(&self, x: &[f64], n: usize) -> Result<FfnCache> {
        let din = self.check_input(if n == 0 { 0 } else { x.len() / n })?;
        if x.len() != n * din {
            return Err(Error::dim("FeedForwardBlock::forward", &[n * din], &[x.len()]));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.affine(&cur, n, &mut out);
            let act = if li == last { self.output } else { self.hidden };
            let w = layer.output_dim();
            for r in 0..n {
                act.apply_row(&mut out[r * w..(r + 1) * w]);
            }
            inputs.push(std::mem::replace(&mut cur, out.clone()));
            outputs.push(out);
        }
        Ok(FfnCache { n, inputs, outputs })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &FfnCache, dout: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let last = self.layers.len() - 1;
        let mut grad = dout.to_vec();
        for li in (0..self.layers.len()).rev() {
            let act = if li == last { self.output } else { self.hidden };
            let w = self.layers[li].output_dim();
            let out = &cache.outputs[li];
            for r in 0..n {
                act.backward_row(&out[r * w..(r + 1) * w], &mut grad[r * w..(r + 1) * w]);
            }
            grad = self.layers[li].affine_backward(&cache.inputs[li], n, &grad);
        }
        grad
    }
}

impl Module for FeedForwardBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
    }
}

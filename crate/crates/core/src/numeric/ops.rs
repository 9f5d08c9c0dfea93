//! Elementwise and slice-wise primitives with their hand-written derivatives.

use super::tensor::{dot, Tensor};
use crate::error::Result;

/// Slices with a norm below this are returned unchanged by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Max-subtracted softmax over a contiguous slice.
pub fn softmax_slice(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Given softmax output `y` and upstream `dy`, returns the input gradient.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let s = dot(y, dy);
    y.iter().zip(dy).map(|(yi, di)| yi * (di - s)).collect()
}

/// Normalizes in place and returns the original norm.
pub fn l2_normalize_slice(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n >= NORM_EPS {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Backward of [`l2_normalize_slice`] given its output `y` and the input norm.
pub fn l2_normalize_backward(y: &[f64], norm: f64, dy: &[f64]) -> Vec<f64> {
    if norm < NORM_EPS {
        return dy.to_vec();
    }
    let s = dot(y, dy);
    y.iter()
        .zip(dy)
        .map(|(yi, di)| (di - yi * s) / norm)
        .collect()
}

fn map_axis(x: &Tensor, axis: usize, f: impl Fn(&mut [f64])) -> Result<Tensor> {
    let (outer, len, inner) = x.axis_layout(axis)?;
    let mut out = x.clone();
    let mut buf = vec![0.0; len];
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[base + j * inner];
            }
            f(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[base + j * inner] = *b;
            }
        }
    }
    Ok(out)
}

/// Softmax along `axis`, stable for large inputs.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    map_axis(x, axis, softmax_slice)
}

/// Unit-normalizes every slice along `axis`; slices with norm below [`NORM_EPS`]
/// pass through unchanged.
pub fn l2_normalize(x: &Tensor, axis: usize) -> Result<Tensor> {
    map_axis(x, axis, |s| {
        l2_normalize_slice(s);
    })
}

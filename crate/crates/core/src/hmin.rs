//! Hierarchical multi-interest attention.
//!
//! Shallow stage: a query network maps `Q` to one unit vector per head, and
//! the masked cosine similarity with every L2-normalized key gives the scores
//! `s = cos(q̂ʰ, K̂_l)·M′_l`. Padding never enters the softmax. Deep stage:
//! each head has its own network over the keys, and the head output is the
//! softmax-weighted sum of those values. Heads are concatenated.
//!
//! Keys and queries are prepared once and reused across all (query, mask)
//! combinations of a sample; gradients are accumulated into [`KeyGrad`] and
//! [`QueryGrad`] and pushed through the networks once at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ops::{l2_normalize_backward, l2_normalize_slice, softmax_backward, softmax_slice};
use crate::numeric::param::join;
use crate::numeric::tensor::{axpy, dot};
use crate::numeric::{Activation, FeedForwardBlock, FfnCache, Module, Parameter, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HminConfig {
    pub heads: usize,
    pub d_k: usize,
    pub d_q: usize,
    pub hidden: Vec<usize>,
}

impl Default for HminConfig {
    fn default() -> Self {
        Self {
            heads: 2,
            d_k: 8,
            d_q: 8,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl HminConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_k == 0 || self.d_q == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("HMIN dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.d_k
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HminUnit {
    config: HminConfig,
    dnn_q: FeedForwardBlock,
    dnn_heads: Vec<FeedForwardBlock>,
}

/// Normalized keys and per-head values for the `n` valid positions.
#[derive(Debug, Clone, Default)]
pub struct KeyCache {
    pub n: usize,
    k_hat: Vec<f64>,
    k_norm: Vec<f64>,
    value_caches: Vec<FfnCache>,
}

impl KeyCache {
    fn value(&self, h: usize) -> &[f64] {
        self.value_caches[h].output()
    }
}

#[derive(Debug, Clone)]
pub struct QueryCache {
    ffn: FfnCache,
    q_hat: Vec<f64>,
    q_norm: Vec<f64>,
}

impl QueryCache {
    /// Per-head norms of the projected query before normalization.
    pub fn norms(&self) -> &[f64] {
        &self.q_norm
    }
}

/// Result of one attention pass.
#[derive(Debug, Clone)]
pub struct Attended {
    /// `H × n` cosine similarities.
    pub cos: Vec<f64>,
    /// `H × n` softmax weights.
    pub weights: Vec<f64>,
    /// `H·d_k`
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KeyGrad {
    d_khat: Vec<f64>,
    d_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct QueryGrad {
    d_qhat: Vec<f64>,
}

impl HminUnit {
    pub fn new(config: HminConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut qw = config.hidden.clone();
        qw.push(config.heads * config.d_k);
        let mut hw = config.hidden.clone();
        hw.push(config.d_k);
        let dnn_q = FeedForwardBlock::with_input(config.d_q, &qw, Activation::Relu, Activation::Identity, seed);
        let dnn_heads = (0..config.heads)
            .map(|h| {
                FeedForwardBlock::with_input(config.d_k, &hw, Activation::Relu, Activation::Identity, seed + 1 + h as u64)
            })
            .collect();
        Ok(Self {
            config,
            dnn_q,
            dnn_heads,
        })
    }

    pub fn config(&self) -> &HminConfig {
        &self.config
    }

    /// `keys` holds `n × d_k` rows for the valid positions only.
    pub fn prepare_keys(&self, keys: &[f64], n: usize) -> Result<KeyCache> {
        let dk = self.config.d_k;
        if keys.len() != n * dk {
            return Err(Error::dim("hmin keys", &[n, dk], &[keys.len() / dk.max(1), dk]));
        }
        if n == 0 {
            return Ok(KeyCache::default());
        }
        let mut k_hat = keys.to_vec();
        let k_norm = k_hat.chunks_mut(dk).map(l2_normalize_slice).collect();
        let value_caches = self
            .dnn_heads
            .iter()
            .map(|b| b.forward_flat(keys, n))
            .collect::<Result<_>>()?;
        Ok(KeyCache {
            n,
            k_hat,
            k_norm,
            value_caches,
        })
    }

    pub fn prepare_query(&self, q: &[f64]) -> Result<QueryCache> {
        if q.len() != self.config.d_q {
            return Err(Error::dim("hmin query", &[self.config.d_q], &[q.len()]));
        }
        let ffn = self.dnn_q.forward_flat(q, 1)?;
        let mut q_hat = ffn.output().to_vec();
        let q_norm = q_hat.chunks_mut(self.config.d_k).map(l2_normalize_slice).collect();
        Ok(QueryCache { ffn, q_hat, q_norm })
    }

    /// `mask` has one entry per valid position.
    pub fn attend(&self, keys: &KeyCache, query: &QueryCache, mask: &[f64]) -> Attended {
        let (hn, dk, n) = (self.config.heads, self.config.d_k, keys.n);
        debug_assert_eq!(mask.len(), n);
        let mut output = vec![0.0; hn * dk];
        let mut cos = vec![0.0; hn * n];
        let mut weights = vec![0.0; hn * n];
        if n == 0 {
            return Attended { cos, weights, output };
        }
        for h in 0..hn {
            let qh = &query.q_hat[h * dk..(h + 1) * dk];
            let w = &mut weights[h * n..(h + 1) * n];
            for l in 0..n {
                let c = dot(qh, &keys.k_hat[l * dk..(l + 1) * dk]);
                cos[h * n + l] = c;
                w[l] = c * mask[l];
            }
            softmax_slice(w);
            let v = keys.value(h);
            let out = &mut output[h * dk..(h + 1) * dk];
            for l in 0..n {
                axpy(w[l], &v[l * dk..(l + 1) * dk], out);
            }
        }
        Attended { cos, weights, output }
    }

    pub fn key_grad(&self, keys: &KeyCache) -> KeyGrad {
        KeyGrad {
            d_khat: vec![0.0; keys.n * self.config.d_k],
            d_values: vec![vec![0.0; keys.n * self.config.d_k]; self.config.heads],
        }
    }

    pub fn query_grad(&self) -> QueryGrad {
        QueryGrad {
            d_qhat: vec![0.0; self.config.heads * self.config.d_k],
        }
    }

    #[allow(clippy::too_many_arguments)]
    /// Backward of one [`HminUnit::attend`] call. Accumulates into the key and
    /// query gradients and into `d_mask`.
    pub fn attend_backward(
        &self,
        keys: &KeyCache,
        query: &QueryCache,
        mask: &[f64],
        att: &Attended,
        d_out: &[f64],
        kg: &mut KeyGrad,
        qg: &mut QueryGrad,
        d_mask: &mut [f64],
    ) {
        let (hn, dk, n) = (self.config.heads, self.config.d_k, keys.n);
        if n == 0 {
            return;
        }
        for h in 0..hn {
            let w = &att.weights[h * n..(h + 1) * n];
            let d_oh = &d_out[h * dk..(h + 1) * dk];
            let v = keys.value(h);
            let dw: Vec<f64> = (0..n).map(|l| dot(d_oh, &v[l * dk..(l + 1) * dk])).collect();
            for l in 0..n {
                axpy(w[l], d_oh, &mut kg.d_values[h][l * dk..(l + 1) * dk]);
            }
            let ds = softmax_backward(w, &dw);
            let qh = &query.q_hat[h * dk..(h + 1) * dk];
            for l in 0..n {
                let c = att.cos[h * n + l];
                d_mask[l] += ds[l] * c;
                let dc = ds[l] * mask[l];
                if dc == 0.0 {
                    continue;
                }
                let kl = &keys.k_hat[l * dk..(l + 1) * dk];
                axpy(dc, kl, &mut qg.d_qhat[h * dk..(h + 1) * dk]);
                axpy(dc, qh, &mut kg.d_khat[l * dk..(l + 1) * dk]);
            }
        }
    }

    /// Pushes accumulated key gradients through normalization and the head
    /// networks; returns `dL/dK` (`n × d_k`).
    pub fn keys_backward(&mut self, keys: &KeyCache, kg: &KeyGrad) -> Vec<f64> {
        let dk = self.config.d_k;
        let mut dkeys = vec![0.0; keys.n * dk];
        if keys.n == 0 {
            return dkeys;
        }
        for l in 0..keys.n {
            let r = l * dk..(l + 1) * dk;
            let g = l2_normalize_backward(&keys.k_hat[r.clone()], keys.k_norm[l], &kg.d_khat[r.clone()]);
            dkeys[r].copy_from_slice(&g);
        }
        for (h, block) in self.dnn_heads.iter_mut().enumerate() {
            let g = block.backward(&keys.value_caches[h], &kg.d_values[h]);
            axpy(1.0, &g, &mut dkeys);
        }
        dkeys
    }

    /// Returns `dL/dQ`.
    pub fn query_backward(&mut self, query: &QueryCache, qg: &QueryGrad) -> Vec<f64> {
        let dk = self.config.d_k;
        let mut d_raw = vec![0.0; qg.d_qhat.len()];
        for h in 0..self.config.heads {
            let r = h * dk..(h + 1) * dk;
            let g = l2_normalize_backward(&query.q_hat[r.clone()], query.q_norm[h], &qg.d_qhat[r.clone()]);
            d_raw[r].copy_from_slice(&g);
        }
        self.dnn_q.backward(&query.ffn, &d_raw)
    }
}

impl Module for HminUnit {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.dnn_q.visit(&join(prefix, "dnn_q"), f);
        for (h, b) in self.dnn_heads.iter().enumerate() {
            b.visit(&join(prefix, &format!("head{h}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.dnn_q.visit_mut(&join(prefix, "dnn_q"), f);
        for (h, b) in self.dnn_heads.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("head{h}")), f);
        }
    }
}

/// One attention pass over a full `L`-slot sequence; padding slots (where
/// `valid` is false) are dropped before attention.
pub fn hmin_attend(unit: &HminUnit, keys: &[f64], query: &[f64], mask: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    let dk = unit.config.d_k;
    let l = valid.len();
    if keys.len() != l * dk || mask.len() != l {
        return Err(Error::dim("hmin_attend", &[l, dk], &[keys.len() / dk, mask.len()]));
    }
    let mut kv = Vec::new();
    let mut mv = Vec::new();
    for (j, &ok) in valid.iter().enumerate() {
        if ok {
            kv.extend_from_slice(&keys[j * dk..(j + 1) * dk]);
            mv.push(mask[j]);
        }
    }
    let kc = unit.prepare_keys(&kv, mv.len())?;
    let qc = unit.prepare_query(query)?;
    Ok(unit.attend(&kc, &qc, &mv).output)
}

/// Concatenates the 15 (material, query) outputs, material-major.
pub fn spatio_temporal_concat(outputs: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    if outputs.len() != 3 {
        return Err(Error::Internal(format!("expected 3 materials, got {}", outputs.len())));
    }
    let nq = outputs[0].len();
    let dim = outputs[0].first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(3 * nq * dim);
    for per_material in outputs {
        if per_material.len() != nq {
            return Err(Error::Internal("materials disagree on query count".into()));
        }
        for o in per_material {
            if o.len() != dim {
                return Err(Error::Internal("attention outputs disagree on width".into()));
            }
            out.extend_from_slice(o);
        }
    }
    Ok(out)
}

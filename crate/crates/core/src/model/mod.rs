//! Embeddings, the spatiotemporal tower, prediction heads and the
//! per-batch training step.

mod config;
mod embedding;
mod net;

pub use config::{apply_ablation, Arch, MaskVariant, ModelConfig, QueryVariant, Task, Variant, VocabSizes};
pub use embedding::EmbeddingTable;
pub use net::{
    load_model, save_model, Embeddings, Forward, Prepared, QueryNet, StimModel, Tower, EVENT_FIELDS, LOGIT_CLAMP,
    REQUEST_FIELDS,
};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::numeric::ops::{sigmoid, softplus};
use crate::numeric::param::zero_grads;
use crate::numeric::Optimizer;

/// Binary cross-entropy on a logit, `softplus(z) − y·z`, and its derivative.
pub fn bce(z: f64, y: f64) -> (f64, f64) {
    (softplus(z) - y * z, sigmoid(z) - y)
}

impl StimModel {
    /// Probabilities per head for one sample.
    pub fn predict(&self, s: &Sample) -> Result<Vec<f64>> {
        let p = self.prepare(s)?;
        Ok(self.forward(s, &p)?.probabilities())
    }

    /// Summed head loss for one prepared sample; gradients scaled by `scale`
    /// are accumulated when `with_grad` is set.
    pub fn loss_and_grad(&mut self, s: &Sample, p: &Prepared, scale: f64, with_grad: bool) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward(s, p)?;
        let y = self.targets(s);
        let mut loss = 0.0;
        let mut dz = Vec::with_capacity(y.len());
        for (&z, &t) in fwd.logits.iter().zip(&y) {
            let (l, d) = bce(z, t);
            loss += l;
            dz.push(d * scale);
        }
        if with_grad && loss.is_finite() {
            self.backward(&fwd, &dz);
        }
        Ok((loss, fwd.logits))
    }

    /// Mean loss over the batch, followed by one optimizer update. A
    /// non-finite loss aborts before any parameter changes.
    pub fn train_step(&mut self, batch: &[(&Sample, &Prepared)], opt: &mut Optimizer) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        zero_grads(self);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (s, p) in batch {
            let (loss, logits) = self.loss_and_grad(s, p, scale, true)?;
            if !loss.is_finite() {
                zero_grads(self);
                return Err(Error::Training {
                    location: format!("user {} at t={}", s.user_id, s.request.timestamp),
                    message: format!("non-finite loss {loss} (logits {logits:?})"),
                });
            }
            total += loss;
        }
        opt.step(self)?;
        zero_grads(self);
        Ok(total * scale)
    }
}

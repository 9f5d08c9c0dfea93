use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, fingerprint, gauc, MetricsReport, TaskMetrics};
use crate::data::Sample;
use crate::error::Result;
use crate::model::{Prepared, StimModel};
use crate::numeric::{Optimizer, OptimizerConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 128,
            optimizer: OptimizerConfig {
                lr: 3e-3,
                ..Default::default()
            },
            shuffle_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

pub fn prepare_all(model: &StimModel, rows: &[Sample]) -> Result<Vec<Prepared>> {
    rows.iter().map(|s| model.prepare(s)).collect()
}

/// Mini-batch training over shuffled rows.
pub fn fit(model: &mut StimModel, rows: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    let prepared = prepare_all(model, rows)?;
    let mut opt = Optimizer::new(cfg.optimizer.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut report = TrainReport::default();
    let bs = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(bs) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&rows[i], &prepared[i])).collect();
            sum += model.train_step(&batch, &mut opt)?;
            batches += 1;
        }
        report.epoch_losses.push(if batches > 0 { sum / batches as f64 } else { 0.0 });
    }
    report.steps = opt.steps_taken();
    Ok(report)
}

/// Per-head probabilities, one inner vector per head.
pub fn predict_all(model: &StimModel, rows: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(rows.len()); model.head_names().len()];
    for s in rows {
        for (h, p) in model.predict(s)?.into_iter().enumerate() {
            out[h].push(p);
        }
    }
    Ok(out)
}

pub fn evaluate(model: &StimModel, rows: &[Sample], slice: &str) -> Result<MetricsReport> {
    let preds = predict_all(model, rows)?;
    let groups: Vec<i64> = rows.iter().map(|s| s.user_id).collect();
    let mut users = groups.clone();
    users.sort_unstable();
    users.dedup();
    let mut tasks = Vec::new();
    for (h, name) in model.head_names().iter().enumerate() {
        let labels: Vec<u8> = rows.iter().map(|s| model.targets(s)[h] as u8).collect();
        tasks.push(TaskMetrics {
            task: name.to_string(),
            auc: auc(&preds[h], &labels).ok(),
            gauc: gauc(&preds[h], &labels, &groups, None).ok(),
            positives: labels.iter().filter(|&&y| y == 1).count(),
        });
    }
    Ok(MetricsReport {
        slice: slice.to_string(),
        rows: rows.len(),
        users: users.len(),
        tasks,
        fingerprint: fingerprint(model.config())?,
    })
}

/// Rows whose history holds fewer than `max_len` behaviors.
pub fn cold_start_slice(rows: &[Sample], max_len: usize) -> Vec<Sample> {
    rows.iter().filter(|s| s.history.len() < max_len).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SyntheticSpec};
    use crate::model::ModelConfig;

    #[test]
    fn cold_start_counts_short_histories() {
        let data = synthesize(
            &SyntheticSpec {
                users: 60,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let slice = cold_start_slice(&data.test, 10);
        let brute = data.test.iter().filter(|s| s.history.len() <= 9).count();
        assert_eq!(slice.len(), brute);
        assert!(!slice.is_empty());
        let mut long = data.test.clone();
        long.retain(|s| s.history.len() >= 10);
        assert!(cold_start_slice(&long, 10).is_empty());
        let mut empty = data.test[0].clone();
        empty.history.clear();
        assert_eq!(cold_start_slice(&[empty], 10).len(), 1);
    }

    #[test]
    fn training_lowers_loss_and_reports_metrics() {
        let data = synthesize(
            &SyntheticSpec {
                users: 40,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let mut m = StimModel::new(ModelConfig {
            k: 16,
            ..Default::default()
        })
        .unwrap();
        let r = fit(
            &mut m,
            &data.train,
            &TrainConfig {
                epochs: 3,
                batch_size: 32,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.epoch_losses.len(), 3);
        assert!(r.epoch_losses[2] < r.epoch_losses[0], "{r:?}");
        let rep = evaluate(&m, &data.test, "test").unwrap();
        assert_eq!(rep.rows, data.test.len());
        let t = &rep.tasks[0];
        assert!(t.auc.is_some_and(|a| (0.0..=1.0).contains(&a)));
        assert_eq!(rep.fingerprint, evaluate(&m, &data.test, "test").unwrap().fingerprint);
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Area under the ROC curve from average ranks; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mean * order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(((rank_sum - p * (p + 1.0) / 2.0) / (p * n)).clamp(0.0, 1.0))
}

/// Weighted mean of per-group AUC. Groups with a single class are skipped;
/// a group's weight defaults to its row count.
pub fn gauc(scores: &[f64], labels: &[u8], groups: &[i64], weights: Option<&BTreeMap<i64, f64>>) -> Result<f64> {
    if scores.len() != labels.len() || groups.len() != labels.len() {
        return Err(Error::dim("gauc", &[labels.len()], &[scores.len(), groups.len()]));
    }
    let mut by_group: BTreeMap<i64, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for ((&s, &y), &g) in scores.iter().zip(labels).zip(groups) {
        let e = by_group.entry(g).or_default();
        e.0.push(s);
        e.1.push(y);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (g, (s, y)) in &by_group {
        let Ok(a) = auc(s, y) else { continue };
        let w = weights.and_then(|w| w.get(g).copied()).unwrap_or(s.len() as f64);
        num += w * a;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::UndefinedMetric("no group has both classes".into()));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: String,
    /// `None` when the slice holds a single class.
    pub auc: Option<f64>,
    pub gauc: Option<f64>,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slice: String,
    pub rows: usize,
    pub users: usize,
    pub tasks: Vec<TaskMetrics>,
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn task(&self, name: &str) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|t| t.task == name)
    }

    /// AUC of the first head.
    pub fn primary_auc(&self) -> Option<f64> {
        self.tasks.first().and_then(|t| t.auc)
    }
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_oracle(s: &[f64], y: &[u8]) -> f64 {
        let (mut hits, mut pairs) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    hits += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        hits / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        let s = [0.3, 0.7, 0.7, 0.1, 0.9, 0.3];
        let y = [0, 1, 0, 0, 1, 1];
        assert!((auc(&s, &y).unwrap() - pair_oracle(&s, &y)).abs() < 1e-12);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn gauc_examples() {
        let s = [0.9, 0.1, 0.5, 0.5];
        let y = [1, 0, 1, 0];
        let g = [1, 1, 2, 2];
        assert!((gauc(&s, &y, &g, None).unwrap() - 0.75).abs() < 1e-12);
        let one = gauc(&s, &y, &[4; 4], None).unwrap();
        assert_eq!(one, auc(&s, &y).unwrap());
        let w = BTreeMap::from([(1, 1.0), (2, 3.0)]);
        assert!((gauc(&s, &y, &g, Some(&w)).unwrap() - 0.625).abs() < 1e-12);
        assert!(gauc(&[0.1, 0.2], &[1, 0], &[1, 2], None).is_err());
    }

    #[test]
    fn gauc_matches_per_group_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s: Vec<f64> = (0..20).map(|_| (rng.random_range(0..6) as f64) / 5.0).collect();
            let y: Vec<u8> = (0..20).map(|_| rng.random_bool(0.4) as u8).collect();
            let g: Vec<i64> = (0..20).map(|_| rng.random_range(0..3)).collect();
            let (mut num, mut den) = (0.0, 0.0);
            for grp in 0..3 {
                let idx: Vec<usize> = (0..20).filter(|&i| g[i] == grp).collect();
                let gs: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
                let gy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                if gy.contains(&0) && gy.contains(&1) {
                    num += idx.len() as f64 * pair_oracle(&gs, &gy);
                    den += idx.len() as f64;
                }
            }
            match gauc(&s, &y, &g, None) {
                Ok(v) => assert!((v - num / den).abs() < 1e-12),
                Err(_) => assert_eq!(den, 0.0),
            }
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = fingerprint(&serde_json::json!({"k": 1})).unwrap();
        assert_eq!(a, fingerprint(&serde_json::json!({"k": 1})).unwrap());
        assert_ne!(a, fingerprint(&serde_json::json!({"k": 2})).unwrap());
        assert_eq!(a.len(), 64);
    }

    proptest! {
        #[test]
        fn auc_matches_pairs_and_is_rank_invariant(
            rows in prop::collection::vec((0u8..8, any::<bool>()), 2..50)
        ) {
            let s: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
            let y: Vec<u8> = rows.iter().map(|r| r.1 as u8).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let a = auc(&s, &y).unwrap();
            prop_assert!((a - pair_oracle(&s, &y)).abs() < 1e-12);
            let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() - 3.0).collect();
            prop_assert!((auc(&t, &y).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn equal_group_aucs_give_that_auc(w1 in 0.1f64..10.0, w2 in 0.1f64..10.0) {
            let s = [0.9, 0.1, 0.2, 0.8, 0.3, 0.4];
            let y = [1, 0, 0, 1, 0, 1];
            let g = [1, 1, 2, 2, 3, 3];
            let w = BTreeMap::from([(1, w1), (2, w2), (3, 1.0)]);
            prop_assert!((gauc(&s, &y, &g, Some(&w)).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

//! Metrics, the training loop, ablation harnesses and significance tests.

mod ablation;
mod metrics;
mod train;

pub use ablation::{
    family_variants, paired_t_test, pretty_table, run_ablation_suite, significance, write_table_csv, AblationRow,
    Family, PairedTTest, SweepSpec, VariantSpec,
};
pub use metrics::{auc, fingerprint, gauc, MetricsReport, TaskMetrics};
pub use train::{cold_start_slice, evaluate, fit, predict_all, prepare_all, TrainConfig, TrainReport};

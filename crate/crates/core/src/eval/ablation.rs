use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::train::{evaluate, fit, TrainConfig};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::forgetting::{CurveFamily, CurveParams, MaterialCurves};
use crate::model::{Arch, ModelConfig, StimModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Curve,
    N,
    M,
    Grid,
    Baseline,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "curve" => Ok(Family::Curve),
            "n" => Ok(Family::N),
            "m" => Ok(Family::M),
            "grid" => Ok(Family::Grid),
            "baseline" => Ok(Family::Baseline),
            _ => Err(Error::Config(format!("unknown ablation family '{s}'"))),
        }
    }
}

/// Forgetting-curve hyperparameter grid. Empty axes fall back to the base
/// curve's value; combinations with `R_init > R_final` are dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub families: Vec<CurveFamily>,
    pub r_init: Vec<f64>,
    pub r_final: Vec<f64>,
    pub s: Vec<f64>,
    pub interval: Vec<f64>,
}

impl SweepSpec {
    pub fn expand(&self, base: &CurveParams) -> Result<Vec<CurveParams>> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let families = if self.families.is_empty() {
            vec![base.family]
        } else {
            self.families.clone()
        };
        let mut out = Vec::new();
        for &family in &families {
            for &r_init in &or(&self.r_init, base.r_init) {
                for &r_final in &or(&self.r_final, base.r_final) {
                    if r_init > r_final {
                        continue;
                    }
                    for &s in &or(&self.s, base.s) {
                        for &interval in &or(&self.interval, base.interval) {
                            let p = CurveParams {
                                family,
                                r_init,
                                r_final,
                                s,
                                interval,
                                ..base.clone()
                            };
                            p.validate()?;
                            out.push(p);
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("sweep grid is empty after filtering R_init <= R_final".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct VariantSpec {
    pub label: String,
    pub model: ModelConfig,
}

fn curve_label(p: &CurveParams) -> String {
    format!(
        "{} r_init={} r_final={} s={} i={}",
        p.family.name(),
        p.r_init,
        p.r_final,
        p.s,
        p.interval
    )
}

/// The model variants compared by one ablation family.
pub fn family_variants(base: &ModelConfig, family: Family, sweep: &SweepSpec) -> Result<Vec<VariantSpec>> {
    let with = |label: String, model: ModelConfig| VariantSpec { label, model };
    let switches = |names: [&str; 4]| {
        names
            .iter()
            .map(|n| with(n.to_string(), base.with_ablations(&[n])))
            .collect::<Vec<_>>()
    };
    let out = match family {
        Family::N => switches(["N1", "N2", "N3", "N4"]),
        Family::M => switches(["M1", "M2", "M3", "M4"]),
        Family::Curve => CurveFamily::ALL
            .iter()
            .map(|&f| {
                let mut m = base.clone();
                m.masks.curves = MaterialCurves::uniform(CurveParams {
                    family: f,
                    ..base.masks.curves.hour.clone()
                });
                with(f.name().to_string(), m)
            })
            .collect(),
        Family::Grid => sweep
            .expand(&base.masks.curves.hour)?
            .into_iter()
            .map(|p| {
                let mut m = base.clone();
                let label = curve_label(&p);
                m.masks.curves = MaterialCurves::uniform(p);
                with(label, m)
            })
            .collect(),
        Family::Baseline => vec![
            with(
                "gsu_baseline".into(),
                ModelConfig {
                    arch: Arch::GsuBaseline,
                    ..base.clone()
                },
            ),
            with("stim".into(), base.clone()),
        ],
    };
    for v in &out {
        v.model.validate()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    /// `ok`, or the divergence diagnostic.
    pub status: String,
    pub rows: usize,
    pub auc: Option<f64>,
    pub gauc: Option<f64>,
    pub final_loss: Option<f64>,
}

/// Trains and evaluates every variant under every seed on the same data.
/// Training divergence becomes a row status; other failures propagate.
pub fn run_ablation_suite(
    variants: &[VariantSpec],
    seeds: &[u64],
    train: &[Sample],
    test: &[Sample],
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    for &seed in seeds {
        for v in variants {
            let mut model = StimModel::new(ModelConfig {
                seed,
                ..v.model.clone()
            })?;
            let tc = TrainConfig {
                shuffle_seed: seed,
                ..cfg.clone()
            };
            let row = match fit(&mut model, train, &tc) {
                Ok(rep) => {
                    let m = evaluate(&model, test, &v.label)?;
                    AblationRow {
                        variant: v.label.clone(),
                        seed,
                        status: "ok".into(),
                        rows: m.rows,
                        auc: m.tasks[0].auc,
                        gauc: m.tasks[0].gauc,
                        final_loss: rep.epoch_losses.last().copied(),
                    }
                }
                Err(e @ Error::Training { .. }) => AblationRow {
                    variant: v.label.clone(),
                    seed,
                    status: format!("diverged: {e}"),
                    rows: test.len(),
                    auc: None,
                    gauc: None,
                    final_loss: None,
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired t-test on `a − b`; `None` with fewer than two pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedTTest> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p_value) = if se == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Some(PairedTTest {
        n,
        mean_diff: mean,
        t,
        p_value,
    })
}

/// Paired t-test of each variant's AUC against `reference`, matched by seed.
pub fn significance(rows: &[AblationRow], reference: &str) -> Vec<(String, PairedTTest)> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if r.variant != reference && !labels.contains(&r.variant.as_str()) {
            labels.push(&r.variant);
        }
    }
    let mut out = Vec::new();
    for l in labels {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for r in rows.iter().filter(|r| r.variant == reference) {
            let other = rows.iter().find(|o| o.variant == l && o.seed == r.seed);
            if let (Some(x), Some(y)) = (r.auc, other.and_then(|o| o.auc)) {
                a.push(x);
                b.push(y);
            }
        }
        if let Some(t) = paired_t_test(&a, &b) {
            out.push((l.to_string(), t));
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn write_table_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "seed", "status", "rows", "auc", "gauc", "final_loss"])?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.seed.to_string(),
            r.status.clone(),
            r.rows.to_string(),
            fmt_opt(r.auc),
            fmt_opt(r.gauc),
            fmt_opt(r.final_loss),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn pretty_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut s = format!("{:<width$}  {:>6}  {:>8}  {:>8}  {:>10}  status\n", "variant", "seed", "auc", "gauc", "loss");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>8}  {:>8}  {:>10}  {}",
            r.variant,
            r.seed,
            r.auc.map_or("-".into(), |v| format!("{v:.4}")),
            r.gauc.map_or("-".into(), |v| format!("{v:.4}")),
            r.final_loss.map_or("-".into(), |v| format!("{v:.4}")),
            r.status
        );
    }
    s
}

//! Central finite-difference verification of analytic gradients.

use super::param::{Module, Parameter};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Perturbation for the central difference.
    pub eps: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Check at most this many entries per parameter (evenly strided).
    pub max_entries: Option<usize>,
    /// Skip parameters whose analytic gradient is identically zero
    /// (e.g. unused embedding rows are still checked entry by entry unless this is set).
    pub skip_zero_params: bool,
    /// Use the fourth-order five-point stencil instead of the central difference.
    pub five_point: bool,
    /// Also estimate at `eps / 2`; entries where the two estimates disagree by
    /// more than this relative amount straddle a non-differentiable point and
    /// are counted in [`ParamReport::kinks`] instead of being compared.
    pub kink_tolerance: Option<f64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-6,
            max_entries: None,
            skip_zero_params: false,
            five_point: false,
            kink_tolerance: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub path: String,
    pub entries_checked: usize,
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (analytic, numeric) at the worst entry.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    pub fn kinks(&self) -> usize {
        self.params.iter().map(|p| p.kinks).sum()
    }

    pub fn entries_checked(&self) -> usize {
        self.params.iter().map(|p| p.entries_checked).sum()
    }

    pub fn worst(&self) -> Option<&ParamReport> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn with_entry<M: Module + ?Sized>(m: &mut M, target: usize, f: &mut dyn FnMut(&mut Parameter)) {
    let mut idx = 0;
    m.visit_mut("", &mut |_, p| {
        if idx == target {
            f(p);
        }
        idx += 1;
    });
}

/// Compares analytic gradients with central differences for every trainable
/// parameter entry.
///
/// `eval(model, with_grad)` must return the scalar loss; when `with_grad` is
/// true it must also leave freshly computed gradients in the parameters.
pub fn grad_check<M, F>(model: &mut M, mut eval: F, cfg: &GradCheckConfig) -> GradCheckReport
where
    M: Module + ?Sized,
    F: FnMut(&mut M, bool) -> f64,
{
    eval(model, true);
    let mut analytic = Vec::new();
    model.visit("", &mut |path, p| {
        analytic.push((path.to_string(), p.trainable, p.grad.data().to_vec()));
    });

    let mut report = GradCheckReport::default();
    for (pi, (path, trainable, grads)) in analytic.iter().enumerate() {
        if !trainable || (cfg.skip_zero_params && grads.iter().all(|g| *g == 0.0)) {
            continue;
        }
        let n = grads.len();
        let stride = cfg.max_entries.map_or(1, |m| n.div_ceil(m.max(1)));
        let mut pr = ParamReport {
            path: path.clone(),
            entries_checked: 0,
            kinks: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: (0.0, 0.0),
        };
        for e in (0..n).step_by(stride) {
            let mut orig = 0.0;
            with_entry(model, pi, &mut |p| orig = p.value.data()[e]);
            let mut at = |model: &mut M, x: f64| {
                with_entry(model, pi, &mut |p| p.value.data_mut()[e] = x);
                eval(model, false)
            };
            let mut estimate = |model: &mut M, h: f64| {
                if cfg.five_point {
                    let (f2p, f1p) = (at(model, orig + 2.0 * h), at(model, orig + h));
                    let (f1m, f2m) = (at(model, orig - h), at(model, orig - 2.0 * h));
                    (8.0 * (f1p - f1m) - (f2p - f2m)) / (12.0 * h)
                } else {
                    (at(model, orig + h) - at(model, orig - h)) / (2.0 * h)
                }
            };
            let num = estimate(model, cfg.eps);
            let kink = cfg.kink_tolerance.is_some_and(|tol| {
                let half = estimate(model, cfg.eps / 2.0);
                (num - half).abs() / num.abs().max(half.abs()).max(cfg.floor) > tol
            });
            with_entry(model, pi, &mut |p| p.value.data_mut()[e] = orig);
            if kink {
                pr.kinks += 1;
                continue;
            }

            let a = grads[e];
            let abs = (a - num).abs();
            let rel = abs / a.abs().max(num.abs()).max(cfg.floor);
            pr.entries_checked += 1;
            pr.max_abs_error = pr.max_abs_error.max(abs);
            if rel > pr.max_rel_error || pr.entries_checked == 1 {
                pr.max_rel_error = pr.max_rel_error.max(rel);
                pr.worst = (a, num);
            }
        }
        report.params.push(pr);
    }
    report
}

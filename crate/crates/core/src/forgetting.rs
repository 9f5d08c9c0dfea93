//! Forgetting-curve dynamic masks.
//!
//! Each material (hour, week, geohash) gets its own retention trajectory over
//! the compressed sequence. Walking back in time from the request, retention
//! follows the base curve until the first review point (a behavior in the same
//! group as the request), then restarts at a lower peak `R_i` and decays at an
//! increasing rate `D_i` after every further review point. Trajectories are
//! min-max normalized and then mixed per position by a one-layer refiner.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::context::{GeoGrouping, GroupAssignment};
use crate::error::{Error, Result};
use crate::gsu::CompressedSequence;
use crate::moe::RequestContext;
use crate::numeric::{Activation, FeedForwardBlock, FfnCache, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    #[default]
    Exponential,
    Power,
    Logarithmic,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 3] = [
        CurveFamily::Exponential,
        CurveFamily::Power,
        CurveFamily::Logarithmic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::Exponential => "exponential",
            CurveFamily::Power => "power",
            CurveFamily::Logarithmic => "logarithmic",
        }
    }
}

/// Hyperparameters of one material's forgetting curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveParams {
    pub family: CurveFamily,
    /// Time constant `S` of the exponential curve.
    pub s: f64,
    /// Review-interval coefficient `I` in `D_i = (1 + i·I)/S`.
    pub interval: f64,
    pub r_init: f64,
    pub r_final: f64,
    /// `(1 + k·t)^m`
    pub power_k: f64,
    pub power_m: f64,
    /// `a − b·ln(t + c)`
    pub log_a: f64,
    pub log_b: f64,
    pub log_c: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            family: CurveFamily::Exponential,
            s: 20.0,
            interval: 2.0,
            r_init: 0.4,
            r_final: 0.9,
            power_k: 0.1,
            power_m: -1.0,
            log_a: 1.0,
            log_b: 0.2,
            log_c: 1.0,
        }
    }
}

impl CurveParams {
    pub fn with_family(family: CurveFamily) -> Self {
        Self {
            family,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.s,
            self.interval,
            self.r_init,
            self.r_final,
            self.power_k,
            self.power_m,
            self.log_a,
            self.log_b,
            self.log_c,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("curve parameters must be finite".into()));
        }
        if self.s <= 0.0 {
            return Err(Error::Config(format!("S must be positive, got {}", self.s)));
        }
        if self.interval < 0.0 {
            return Err(Error::Config(format!("I must be non-negative, got {}", self.interval)));
        }
        if !(self.r_init > 0.0 && self.r_init <= self.r_final && self.r_final <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < R_init <= R_final <= 1, got {} / {}",
                self.r_init, self.r_final
            )));
        }
        match self.family {
            CurveFamily::Logarithmic if self.log_c <= 0.0 => Err(Error::Config(format!(
                "logarithmic curve needs c > 0, got {}",
                self.log_c
            ))),
            CurveFamily::Power if self.power_k < 0.0 => Err(Error::Config(format!(
                "power curve needs k >= 0, got {}",
                self.power_k
            ))),
            _ => Ok(()),
        }
    }
}

/// Retention without any review, clamped to `[0, 1]`.
pub fn base_retention(t: f64, p: &CurveParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("retention time must be >= 0, got {t}")));
    }
    let r = match p.family {
        CurveFamily::Exponential => {
            if p.s <= 0.0 {
                return Err(Error::Config("S must be positive".into()));
            }
            (-t / p.s).exp()
        }
        CurveFamily::Power => (1.0 + p.power_k * t).powf(p.power_m),
        CurveFamily::Logarithmic => {
            if p.log_c <= 0.0 {
                return Err(Error::Config(format!("logarithmic curve needs c > 0, got {}", p.log_c)));
            }
            p.log_a - p.log_b * (t + p.log_c).ln()
        }
    };
    Ok(r.clamp(0.0, 1.0))
}

/// `(R_i, D_i)` for `i = 1..=n`: peaks fall linearly from `R_final` to
/// `R_init`, decay rates grow as `(1 + i·I)/S`.
pub fn review_retention_schedule(p: &CurveParams, n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let r = if n == 1 {
                p.r_final
            } else {
                p.r_final - (p.r_final - p.r_init) * (i - 1) as f64 / (n - 1) as f64
            };
            let d = (1.0 + i as f64 * p.interval) / p.s;
            (r, d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Hour,
    Week,
    Geo,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Hour, Material::Week, Material::Geo];

    pub fn name(self) -> &'static str {
        match self {
            Material::Hour => "hour",
            Material::Week => "week",
            Material::Geo => "geo",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn same_group(self, a: &GroupAssignment, b: &GroupAssignment) -> bool {
        match self {
            Material::Hour => a.hour == b.hour,
            Material::Week => a.week == b.week,
            Material::Geo => a.geo == b.geo,
        }
    }
}

/// Review points of one material, most recent first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSchedule {
    pub material: Material,
    pub positions: Vec<usize>,
}

impl ReviewSchedule {
    pub fn empty(material: Material) -> Self {
        Self {
            material,
            positions: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }
}

/// Valid positions whose event shares the request's group for `material`.
pub fn find_review_points(
    seq: &CompressedSequence,
    request: &RequestContext,
    material: Material,
    grouping: &GeoGrouping,
) -> Result<ReviewSchedule> {
    let req = request.groups(grouping)?;
    let mut positions = Vec::new();
    for (j, e) in seq.events().enumerate() {
        if material.same_group(&e.groups(grouping)?, &req) {
            positions.push(j);
        }
    }
    positions.reverse();
    Ok(ReviewSchedule { material, positions })
}

/// How time gaps to the request are turned into curve time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeMapping {
    /// Gaps over the valid positions are mapped affinely onto `[0, k]`.
    #[default]
    RescaledGap,
    /// `t` is the number of positions back from the most recent event.
    Index,
}

/// Per-position raw gap (seconds) and curve time; `None` marks padding.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAxis {
    pub gaps: Vec<Option<f64>>,
    pub t: Vec<Option<f64>>,
}

pub fn time_axis(seq: &CompressedSequence, request_ts: i64, mapping: TimeMapping) -> TimeAxis {
    let k = seq.k();
    let n = seq.valid_len();
    let mut gaps = vec![None; k];
    let mut t = vec![None; k];
    for (j, e) in seq.events().enumerate() {
        gaps[j] = Some((request_ts - e.timestamp).max(0) as f64);
    }
    match mapping {
        TimeMapping::RescaledGap => {
            let vals = gaps.iter().flatten();
            let lo = vals.clone().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.copied().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..n {
                let g = gaps[j].unwrap();
                t[j] = Some(if hi > lo { k as f64 * (g - lo) / (hi - lo) } else { 0.0 });
            }
        }
        TimeMapping::Index => {
            for (j, tj) in t.iter_mut().enumerate().take(n) {
                *tj = Some((n - 1 - j) as f64);
            }
        }
    }
    TimeAxis { gaps, t }
}

/// Peak values used at review points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ReviewValues {
    /// `R_i` falls from `R_final` to `R_init` with review index.
    #[default]
    Decreasing,
    /// Every review point restarts at `R_final`.
    Identical,
}

/// Retention at every slot; padding is 0.
pub fn retention_trajectory(
    axis: &TimeAxis,
    schedule: &ReviewSchedule,
    params: &CurveParams,
    values: ReviewValues,
) -> Result<Vec<f64>> {
    let k = axis.t.len();
    let mut out = vec![0.0; k];
    let mut sched = review_retention_schedule(params, schedule.n());
    if values == ReviewValues::Identical {
        sched.iter_mut().for_each(|(r, _)| *r = params.r_final);
    }
    let n_valid = axis.t.iter().take_while(|t| t.is_some()).count();
    let mut next = 0usize;
    // (R_i, D_i, t_last) of the active review segment
    let mut active: Option<(f64, f64, f64)> = None;
    for j in (0..n_valid).rev() {
        let t = axis.t[j].unwrap();
        if next < schedule.n() && schedule.positions[next] == j {
            let (r, d) = sched[next];
            active = Some((r, d, t));
            next += 1;
        }
        out[j] = match active {
            None => base_retention(t, params)?,
            Some((r, d, t_last)) => (r * (-(t - t_last) * d).exp()).clamp(0.0, 1.0),
        };
    }
    if next != schedule.n() {
        return Err(Error::Internal(format!(
            "review positions {:?} not all valid and strictly decreasing",
            schedule.positions
        )));
    }
    Ok(out)
}

/// Min-max scales valid entries onto `[0, 1]`; a constant input maps to 1 and
/// padding to 0.
pub fn normalize_mask(raw: &[f64], valid: &[bool]) -> Vec<f64> {
    let vals = raw.iter().zip(valid).filter(|(_, &v)| v).map(|(r, _)| *r);
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .zip(valid)
        .map(|(&r, &v)| {
            if !v {
                0.0
            } else if hi > lo {
                (r - lo) / (hi - lo)
            } else {
                1.0
            }
        })
        .collect()
}

/// Mask construction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MaskStrategy {
    /// Base curve plus review restarts at group hits.
    #[default]
    Reviewed,
    /// Review points present but all peaks equal `R_final`.
    IdenticalReviews,
    /// Base curve only, no review points.
    DecayOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct MaterialCurves {
    pub hour: CurveParams,
    pub week: CurveParams,
    pub geo: CurveParams,
}


impl MaterialCurves {
    pub fn uniform(p: CurveParams) -> Self {
        Self {
            hour: p.clone(),
            week: p.clone(),
            geo: p,
        }
    }

    pub fn get(&self, m: Material) -> &CurveParams {
        match m {
            Material::Hour => &self.hour,
            Material::Week => &self.week,
            Material::Geo => &self.geo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Material::ALL {
            self.get(m)
                .validate()
                .map_err(|e| Error::Config(format!("{} curve: {e}", m.name())))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub curves: MaterialCurves,
    pub time_mapping: TimeMapping,
    pub grouping: GeoGrouping,
}

/// Normalized per-material masks over `k` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub hour: Vec<f64>,
    pub week: Vec<f64>,
    pub geo: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MaskSet {
    pub fn get(&self, m: Material) -> &[f64] {
        match m {
            Material::Hour => &self.hour,
            Material::Week => &self.week,
            Material::Geo => &self.geo,
        }
    }

    pub fn k(&self) -> usize {
        self.valid.len()
    }
}

fn schedule_for(
    seq: &CompressedSequence,
    request: &RequestContext,
    material: Material,
    cfg: &MaskConfig,
    strategy: MaskStrategy,
) -> Result<ReviewSchedule> {
    match strategy {
        MaskStrategy::DecayOnly => Ok(ReviewSchedule::empty(material)),
        _ => find_review_points(seq, request, material, &cfg.grouping),
    }
}

/// Raw (un-normalized) trajectories for the three materials.
pub fn raw_trajectories(
    seq: &CompressedSequence,
    request: &RequestContext,
    cfg: &MaskConfig,
    strategy: MaskStrategy,
) -> Result<[Vec<f64>; 3]> {
    let axis = time_axis(seq, request.timestamp, cfg.time_mapping);
    let values = match strategy {
        MaskStrategy::IdenticalReviews => ReviewValues::Identical,
        _ => ReviewValues::Decreasing,
    };
    let mut out: [Vec<f64>; 3] = Default::default();
    for m in Material::ALL {
        let sched = schedule_for(seq, request, m, cfg, strategy)?;
        out[m.index()] = retention_trajectory(&axis, &sched, cfg.curves.get(m), values)?;
    }
    Ok(out)
}

pub fn build_masks(
    seq: &CompressedSequence,
    request: &RequestContext,
    cfg: &MaskConfig,
    strategy: MaskStrategy,
) -> Result<MaskSet> {
    let valid = seq.valid_mask();
    let [h, w, g] = raw_trajectories(seq, request, cfg, strategy)?;
    Ok(MaskSet {
        hour: normalize_mask(&h, &valid),
        week: normalize_mask(&w, &valid),
        geo: normalize_mask(&g, &valid),
        valid,
    })
}

/// The per-position mask mixer: one layer, 3 → 3, sigmoid output.
pub fn mask_refiner(seed: u64) -> FeedForwardBlock {
    FeedForwardBlock::with_input(3, &[3], Activation::Identity, Activation::Sigmoid, seed)
}

/// Refined masks as a `k × 3` tensor (columns hour, week, geo) with padding
/// rows forced to zero, plus the refiner cache over the valid rows.
pub fn refine_masks(masks: &MaskSet, refiner: &FeedForwardBlock) -> Result<(Tensor, FfnCache)> {
    let k = masks.k();
    let n = masks.valid.iter().take_while(|&&v| v).count();
    if n == 0 {
        return Ok((Tensor::zeros(&[k, 3]), FfnCache::default()));
    }
    let mut input = Vec::with_capacity(n * 3);
    for j in 0..n {
        input.extend_from_slice(&[masks.hour[j], masks.week[j], masks.geo[j]]);
    }
    let cache = refiner.forward_flat(&input, n)?;
    let mut out = vec![0.0; k * 3];
    out[..n * 3].copy_from_slice(cache.output());
    Ok((Tensor::new(vec![k, 3], out)?, cache))
}

/// Unrefined masks laid out like [`refine_masks`] output.
pub fn stack_masks(masks: &MaskSet) -> Tensor {
    let k = masks.k();
    let mut out = vec![0.0; k * 3];
    for j in 0..k {
        out[j * 3] = masks.hour[j];
        out[j * 3 + 1] = masks.week[j];
        out[j * 3 + 2] = masks.geo[j];
    }
    Tensor::new(vec![k, 3], out).expect("k x 3")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub position: usize,
    pub gap: Option<f64>,
    pub t: Option<f64>,
    pub material: Material,
    pub retention: f64,
    pub review: bool,
}

/// One row per (position, material) with the raw retention value.
pub fn dump_trajectory(
    seq: &CompressedSequence,
    request: &RequestContext,
    cfg: &MaskConfig,
    strategy: MaskStrategy,
) -> Result<Vec<TrajectoryRow>> {
    let axis = time_axis(seq, request.timestamp, cfg.time_mapping);
    let traj = raw_trajectories(seq, request, cfg, strategy)?;
    let mut rows = Vec::with_capacity(seq.k() * 3);
    for m in Material::ALL {
        let sched = schedule_for(seq, request, m, cfg, strategy)?;
        for j in 0..seq.k() {
            rows.push(TrajectoryRow {
                position: j,
                gap: axis.gaps[j],
                t: axis.t[j],
                material: m,
                retention: traj[m.index()][j],
                review: sched.positions.contains(&j),
            });
        }
    }
    Ok(rows)
}

/// CSV with header `position,gap,t,material,retention,review`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position", "gap", "t", "material", "retention", "review"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.position.to_string(),
            opt(r.gap),
            opt(r.t),
            r.material.name().to_string(),
            r.retention.to_string(),
            u8::from(r.review).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trajectory csv>", e))
}

//! Query mixture of experts.
//!
//! Request-context features `X = [X_Hour | X_Week | X_Loc | X_Item]` feed
//! three base experts (time, location, item). The time expert's output feeds
//! two sub-experts (hour, week). Four sigmoid gates, each reading only its own
//! slice of `X`, weight the hour, week, location and item parts; the week gate
//! is raised by `α` on holidays. `Q¹` sums the four weighted parts and
//! `Q²..Q⁵` are configurable pairwise sums.

use serde::{Deserialize, Serialize};

use crate::context::{Geohash6, GeoGrouping, GroupAssignment, Weekday};
use crate::error::{Error, Result};
use crate::numeric::param::join;
use crate::numeric::tensor::{axpy, dot};
use crate::numeric::{Activation, Dense, FeedForwardBlock, FfnCache, Module, Parameter, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetItem {
    pub item_id: i64,
    pub category_id: i64,
    pub shop_id: i64,
}

/// The moment and place of a recommendation request plus the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestContext {
    pub timestamp: i64,
    pub hour_of_day: u8,
    pub weekday: Weekday,
    pub geohash6: Geohash6,
    #[serde(default)]
    pub is_holiday: u8,
    pub target: TargetItem,
}

impl RequestContext {
    pub fn groups(&self, grouping: &GeoGrouping) -> Result<GroupAssignment> {
        GroupAssignment::of(self.hour_of_day, self.weekday, &self.geohash6, grouping)
    }
}

/// The four weighted parts combined into queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Hour,
    Week,
    Loc,
    Item,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Hour, Part::Week, Part::Loc, Part::Item];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const DEFAULT_PAIRS: [(Part, Part); 4] = [
    (Part::Hour, Part::Item),
    (Part::Week, Part::Item),
    (Part::Loc, Part::Item),
    (Part::Hour, Part::Loc),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoEConfig {
    pub alpha_holiday: f64,
    pub d_q: usize,
    pub hidden: Vec<usize>,
    pub pairs: Vec<(Part, Part)>,
}

impl Default for MoEConfig {
    fn default() -> Self {
        Self {
            alpha_holiday: 0.5,
            d_q: 8,
            hidden: DEFAULT_HIDDEN.to_vec(),
            pairs: DEFAULT_PAIRS.to_vec(),
        }
    }
}

impl MoEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_holiday.is_finite() && self.alpha_holiday >= 0.0) {
            return Err(Error::Config(format!("alpha_holiday must be >= 0, got {}", self.alpha_holiday)));
        }
        if self.d_q == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("MoE widths must be positive".into()));
        }
        validate_pairs(&self.pairs)
    }

    fn widths(&self, out: usize) -> Vec<usize> {
        let mut w = self.hidden.clone();
        w.push(out);
        w
    }
}

pub fn validate_pairs(pairs: &[(Part, Part)]) -> Result<()> {
    if pairs.len() != 4 {
        return Err(Error::Config(format!("pair set needs exactly 4 entries, got {}", pairs.len())));
    }
    let mut seen = Vec::new();
    for &(a, b) in pairs {
        if a == b {
            return Err(Error::Config(format!("pair ({a:?}, {a:?}) combines a part with itself")));
        }
        let key = (a.min(b), a.max(b));
        if seen.contains(&key) {
            return Err(Error::Config(format!("duplicate pair ({a:?}, {b:?})")));
        }
        seen.push(key);
    }
    Ok(())
}

/// Sum of the two weighted parts named by each pair.
pub fn pairwise_queries(parts: &[Vec<f64>; 4], pairs: &[(Part, Part)]) -> Result<Vec<Vec<f64>>> {
    validate_pairs(pairs)?;
    Ok(pairs
        .iter()
        .map(|&(a, b)| {
            parts[a.index()]
                .iter()
                .zip(&parts[b.index()])
                .map(|(x, y)| x + y)
                .collect()
        })
        .collect())
}

/// Widths of the slices of `X`, in the order hour, week, loc, item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSlices {
    pub hour: usize,
    pub week: usize,
    pub loc: usize,
    pub item: usize,
}

impl ContextSlices {
    pub fn total(&self) -> usize {
        self.hour + self.week + self.loc + self.item
    }

    pub fn range(&self, part: Part) -> std::ops::Range<usize> {
        let w = [self.hour, self.week, self.loc, self.item];
        let start: usize = w[..part.index()].iter().sum();
        start..start + w[part.index()]
    }
}

/// Five (or fewer, for ablations) `d_q` query vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBundle {
    pub queries: Vec<Vec<f64>>,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct MoeCache {
    time: FfnCache,
    loc: FfnCache,
    item: FfnCache,
    hour: FfnCache,
    week: FfnCache,
    gates: [FfnCache; 4],
    /// Expert outputs for hour, week, loc, item.
    pub h: [Vec<f64>; 4],
    /// Gate values (week already holiday-enhanced).
    pub omega: [f64; 4],
    pub parts: [Vec<f64>; 4],
    pub bundle: QueryBundle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryMoE {
    config: MoEConfig,
    slices: ContextSlices,
    e_time: FeedForwardBlock,
    e_loc: FeedForwardBlock,
    e_item: FeedForwardBlock,
    e_hour: FeedForwardBlock,
    e_week: FeedForwardBlock,
    gates: [FeedForwardBlock; 4],
}

impl QueryMoE {
    pub fn new(config: MoEConfig, slices: ContextSlices, seed: u64) -> Result<Self> {
        config.validate()?;
        let x = slices.total();
        let d = config.d_q;
        let expert = |input, s| {
            FeedForwardBlock::with_input(input, &config.widths(d), Activation::Relu, Activation::Identity, s)
        };
        let gate = |input, s| {
            FeedForwardBlock::with_input(input, &config.widths(1), Activation::Relu, Activation::Sigmoid, s)
        };
        Ok(Self {
            e_time: expert(x, seed),
            e_loc: expert(x, seed + 1),
            e_item: expert(x, seed + 2),
            e_hour: expert(d, seed + 3),
            e_week: expert(d, seed + 4),
            gates: [
                gate(slices.hour, seed + 5),
                gate(slices.week, seed + 6),
                gate(slices.loc, seed + 7),
                gate(slices.item, seed + 8),
            ],
            config,
            slices,
        })
    }

    pub fn config(&self) -> &MoEConfig {
        &self.config
    }

    pub fn slices(&self) -> ContextSlices {
        self.slices
    }

    /// `all_queries = false` keeps only `Q¹`.
    pub fn forward(&self, x: &[f64], holiday: bool, all_queries: bool) -> Result<MoeCache> {
        if x.len() != self.slices.total() {
            return Err(Error::Config(format!(
                "context features have width {}, expected {}",
                x.len(),
                self.slices.total()
            )));
        }
        let time = self.e_time.forward_flat(x, 1)?;
        let loc = self.e_loc.forward_flat(x, 1)?;
        let item = self.e_item.forward_flat(x, 1)?;
        let hour = self.e_hour.forward_flat(time.output(), 1)?;
        let week = self.e_week.forward_flat(time.output(), 1)?;
        let mut gates: [FfnCache; 4] = Default::default();
        let mut omega = [0.0; 4];
        for p in Part::ALL {
            let c = self.gates[p.index()].forward_flat(&x[self.slices.range(p)], 1)?;
            omega[p.index()] = c.output()[0];
            gates[p.index()] = c;
        }
        if holiday {
            omega[Part::Week.index()] += self.config.alpha_holiday;
        }
        let h = [
            hour.output().to_vec(),
            week.output().to_vec(),
            loc.output().to_vec(),
            item.output().to_vec(),
        ];
        let (parts, bundle) = combine(&h, &omega, &self.config.pairs, all_queries)?;
        Ok(MoeCache {
            time,
            loc,
            item,
            hour,
            week,
            gates,
            h,
            omega,
            parts,
            bundle,
        })
    }

    /// `d_queries` holds one gradient per emitted query. Returns `dL/dX`.
    pub fn backward(&mut self, cache: &MoeCache, d_queries: &[Vec<f64>]) -> Vec<f64> {
        let d = self.config.d_q;
        let mut d_parts = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        if let Some(dq1) = d_queries.first() {
            for dp in d_parts.iter_mut() {
                axpy(1.0, dq1, dp);
            }
        }
        for (dq, &(a, b)) in d_queries.iter().skip(1).zip(&self.config.pairs) {
            axpy(1.0, dq, &mut d_parts[a.index()]);
            axpy(1.0, dq, &mut d_parts[b.index()]);
        }
        let mut dx = vec![0.0; self.slices.total()];
        let mut dh: [Vec<f64>; 4] = Default::default();
        for p in Part::ALL {
            let i = p.index();
            let d_omega = dot(&d_parts[i], &cache.h[i]);
            let gx = self.gates[i].backward(&cache.gates[i], &[d_omega]);
            axpy(1.0, &gx, &mut dx[self.slices.range(p)]);
            dh[i] = d_parts[i].iter().map(|g| g * cache.omega[i]).collect();
        }
        let mut d_time = self.e_hour.backward(&cache.hour, &dh[Part::Hour.index()]);
        let dw = self.e_week.backward(&cache.week, &dh[Part::Week.index()]);
        axpy(1.0, &dw, &mut d_time);
        for g in [
            self.e_time.backward(&cache.time, &d_time),
            self.e_loc.backward(&cache.loc, &dh[Part::Loc.index()]),
            self.e_item.backward(&cache.item, &dh[Part::Item.index()]),
        ] {
            axpy(1.0, &g, &mut dx);
        }
        dx
    }
}

/// Weighted parts `ω_p ⊙ h_p` and the resulting queries.
pub fn combine(
    h: &[Vec<f64>; 4],
    omega: &[f64; 4],
    pairs: &[(Part, Part)],
    all_queries: bool,
) -> Result<([Vec<f64>; 4], QueryBundle)> {
    let parts: [Vec<f64>; 4] = std::array::from_fn(|i| h[i].iter().map(|v| v * omega[i]).collect());
    let mut q1 = vec![0.0; h[0].len()];
    for p in &parts {
        axpy(1.0, p, &mut q1);
    }
    let mut queries = vec![q1];
    if all_queries {
        queries.extend(pairwise_queries(&parts, pairs)?);
    }
    Ok((parts, QueryBundle { queries }))
}

impl Module for QueryMoE {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.e_time.visit(&join(prefix, "e_time"), f);
        self.e_loc.visit(&join(prefix, "e_loc"), f);
        self.e_item.visit(&join(prefix, "e_item"), f);
        self.e_hour.visit(&join(prefix, "e_hour"), f);
        self.e_week.visit(&join(prefix, "e_week"), f);
        for (i, g) in self.gates.iter().enumerate() {
            g.visit(&join(prefix, &format!("gate{}", i + 1)), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.e_time.visit_mut(&join(prefix, "e_time"), f);
        self.e_loc.visit_mut(&join(prefix, "e_loc"), f);
        self.e_item.visit_mut(&join(prefix, "e_item"), f);
        self.e_hour.visit_mut(&join(prefix, "e_hour"), f);
        self.e_week.visit_mut(&join(prefix, "e_week"), f);
        for (i, g) in self.gates.iter_mut().enumerate() {
            g.visit_mut(&join(prefix, &format!("gate{}", i + 1)), f);
        }
    }
}

/// Single query from a linear projection of concatenated item and scene
/// embeddings, used by the M1 ablation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcatQuery {
    pub proj: Dense,
}

impl ConcatQuery {
    pub fn new(input: usize, d_q: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self {
            proj: Dense::new(input, d_q, &mut rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.proj.input_dim() {
            return Err(Error::dim("ConcatQuery", &[self.proj.input_dim()], &[x.len()]));
        }
        let mut out = Vec::new();
        self.proj.affine(x, 1, &mut out);
        Ok(out)
    }

    pub fn backward(&mut self, x: &[f64], dq: &[f64]) -> Vec<f64> {
        self.proj.affine_backward(x, 1, dq)
    }
}

impl Module for ConcatQuery {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}

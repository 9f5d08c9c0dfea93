use super::config::{Arch, ModelConfig, QueryVariant, Variant};
use super::embedding::EmbeddingTable;
use crate::context::GeoGrouping;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::forgetting::build_masks;
use crate::gsu::{gsu_positions, BehaviorEvent, CompressedSequence};
use crate::hmin::{Attended, HminUnit, KeyCache, QueryCache};
use crate::moe::{ConcatQuery, ContextSlices, MoeCache, QueryMoE, RequestContext};
use crate::numeric::ops::sigmoid;
use crate::numeric::param::join;
use crate::numeric::tensor::axpy;
use crate::numeric::{Activation, Dense, FeedForwardBlock, FfnCache, Module, Parameter};

/// Event fields embedded per position: item, category, shop, hour, weekday, geo group.
pub const EVENT_FIELDS: usize = 6;
/// Request fields: the event fields plus the holiday flag.
pub const REQUEST_FIELDS: usize = 7;

/// Logits are clamped to this magnitude before the sigmoid so that reported
/// probabilities stay strictly inside (0, 1).
pub const LOGIT_CLAMP: f64 = 35.0;

#[derive(Debug, Clone)]
pub struct Embeddings {
    pub item: EmbeddingTable,
    pub category: EmbeddingTable,
    pub shop: EmbeddingTable,
    pub hour: EmbeddingTable,
    pub weekday: EmbeddingTable,
    pub geo: EmbeddingTable,
    pub holiday: EmbeddingTable,
}

impl Embeddings {
    fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let d = cfg.embedding_dim;
        Self {
            item: EmbeddingTable::new(cfg.vocab.item, d, seed),
            category: EmbeddingTable::new(cfg.vocab.category, d, seed + 1),
            shop: EmbeddingTable::new(cfg.vocab.shop, d, seed + 2),
            hour: EmbeddingTable::new(25, d, seed + 3),
            weekday: EmbeddingTable::new(8, d, seed + 4),
            geo: EmbeddingTable::new(4, d, seed + 5),
            holiday: EmbeddingTable::new(3, d, seed + 6),
        }
    }

    fn table(&self, f: usize) -> &EmbeddingTable {
        match f {
            0 => &self.item,
            1 => &self.category,
            2 => &self.shop,
            3 => &self.hour,
            4 => &self.weekday,
            5 => &self.geo,
            _ => &self.holiday,
        }
    }

    fn table_mut(&mut self, f: usize) -> &mut EmbeddingTable {
        match f {
            0 => &mut self.item,
            1 => &mut self.category,
            2 => &mut self.shop,
            3 => &mut self.hour,
            4 => &mut self.weekday,
            5 => &mut self.geo,
            _ => &mut self.holiday,
        }
    }

    fn hour_row(h: u8) -> usize {
        if h < 24 {
            h as usize + 1
        } else {
            0
        }
    }

    fn event_rows(&self, e: &BehaviorEvent, g: &GeoGrouping) -> [usize; EVENT_FIELDS] {
        [
            self.item.index(e.item_id),
            self.category.index(e.category_id),
            self.shop.index(e.shop_id),
            Self::hour_row(e.hour_of_day),
            e.weekday.index() + 1,
            g.assign_code(&e.geohash6).index() + 1,
        ]
    }

    fn request_rows(&self, r: &RequestContext, g: &GeoGrouping) -> [usize; REQUEST_FIELDS] {
        [
            self.item.index(r.target.item_id),
            self.category.index(r.target.category_id),
            self.shop.index(r.target.shop_id),
            Self::hour_row(r.hour_of_day),
            r.weekday.index() + 1,
            g.assign_code(&r.geohash6).index() + 1,
            if r.is_holiday <= 1 { r.is_holiday as usize + 1 } else { 0 },
        ]
    }

    /// Appends the embeddings of `(field, row)` pairs.
    fn gather(&self, fields: &[usize], rows: &[usize], out: &mut Vec<f64>) {
        for &f in fields {
            out.extend_from_slice(self.table(f).row(rows[f]));
        }
    }

    fn scatter(&mut self, fields: &[usize], rows: &[usize], grad: &[f64]) {
        let d = self.item.dim();
        for (i, &f) in fields.iter().enumerate() {
            self.table_mut(f).add_grad(rows[f], &grad[i * d..(i + 1) * d]);
        }
    }
}

impl Module for Embeddings {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        for (i, name) in ["item", "category", "shop", "hour", "weekday", "geo", "holiday"].iter().enumerate() {
            self.table(i).visit(&join(prefix, name), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        for (i, name) in ["item", "category", "shop", "hour", "weekday", "geo", "holiday"].iter().enumerate() {
            self.table_mut(i).visit_mut(&join(prefix, name), f);
        }
    }
}

const ALL_EVENT: [usize; 6] = [0, 1, 2, 3, 4, 5];
const ALL_REQUEST: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];
const ITEM_SIDE: [usize; 3] = [0, 1, 2];
/// Query-network input order: hour, weekday, geo, then item, category, shop.
const MOE_FIELDS: [usize; 6] = [3, 4, 5, 0, 1, 2];

#[derive(Debug, Clone)]
pub enum QueryNet {
    Moe(QueryMoE),
    Concat(ConcatQuery),
}

#[derive(Debug, Clone)]
pub struct Tower {
    pub key_proj: Dense,
    pub refiner: Option<FeedForwardBlock>,
    pub query: QueryNet,
    pub hmin: HminUnit,
}

/// Sequence-side inputs that depend only on the sample and the config:
/// the GSU positions (indices into the history) and the un-refined masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub positions: Vec<usize>,
    /// `n × 3` (hour, week, geo) over the kept positions.
    pub masks: Vec<f64>,
}

impl Prepared {
    pub fn n(&self) -> usize {
        self.positions.len()
    }
}

enum QueryFwd {
    Moe(Box<MoeCache>),
    Concat,
}

struct StimCache {
    rows: Vec<[usize; EVENT_FIELDS]>,
    event_x: Vec<f64>,
    keys: KeyCache,
    masks: [Vec<f64>; 3],
    refine: Option<FfnCache>,
    query: QueryFwd,
    query_input: Vec<f64>,
    queries: Vec<QueryCache>,
    attended: Vec<Attended>,
}

enum Body {
    Baseline { rows: Vec<[usize; EVENT_FIELDS]> },
    Stim(Box<StimCache>),
}

/// Forward state of one sample.
pub struct Forward {
    pub logits: Vec<f64>,
    req_rows: [usize; REQUEST_FIELDS],
    feat_dim: usize,
    head_caches: Vec<FfnCache>,
    body: Body,
}

impl Forward {
    /// Clamped-logit probabilities per head.
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))).collect()
    }
}

/// Full model: embeddings, the spatiotemporal tower (absent for the GSU-only
/// baseline) and one prediction head per task.
#[derive(Debug, Clone)]
pub struct StimModel {
    config: ModelConfig,
    variant: Variant,
    pub emb: Embeddings,
    pub tower: Option<Tower>,
    pub heads: Vec<FeedForwardBlock>,
}

impl StimModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let variant = config.validate()?;
        let seed = config.seed.wrapping_mul(1_000);
        let e = config.embedding_dim;
        let emb = Embeddings::new(&config, seed);
        let (tower, feat_dim) = match config.arch {
            Arch::GsuBaseline => (None, ITEM_SIDE.len() * e),
            Arch::Stim => {
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed + 10);
                let key_proj = Dense::new(EVENT_FIELDS * e, config.hmin.d_k, &mut rng);
                let refiner = variant.refines().then(|| crate::forgetting::mask_refiner(seed + 11));
                let query = match variant.query {
                    QueryVariant::M1 => QueryNet::Concat(ConcatQuery::new(REQUEST_FIELDS * e, config.moe.d_q, seed + 12)),
                    _ => QueryNet::Moe(QueryMoE::new(
                        config.moe.clone(),
                        ContextSlices {
                            hour: e,
                            week: e,
                            loc: e,
                            item: 3 * e,
                        },
                        seed + 20,
                    )?),
                };
                let hmin = HminUnit::new(config.hmin.clone(), seed + 40)?;
                let fd = 3 * variant.query_count() * config.hmin.output_dim();
                (
                    Some(Tower {
                        key_proj,
                        refiner,
                        query,
                        hmin,
                    }),
                    fd,
                )
            }
        };
        let mut widths = config.head_widths.clone();
        widths.push(1);
        let heads = (0..config.task.heads().len())
            .map(|h| {
                FeedForwardBlock::with_input(
                    feat_dim + REQUEST_FIELDS * e,
                    &widths,
                    Activation::Relu,
                    Activation::Identity,
                    seed + 60 + h as u64,
                )
            })
            .collect();
        Ok(Self {
            config,
            variant,
            emb,
            tower,
            heads,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn head_names(&self) -> &'static [&'static str] {
        self.config.task.heads()
    }

    /// Labels matching [`StimModel::head_names`].
    pub fn targets(&self, s: &Sample) -> Vec<f64> {
        self.head_names()
            .iter()
            .map(|&h| match h {
                "ctr" => s.labels.click as f64,
                _ => (s.labels.click & s.labels.conversion) as f64,
            })
            .collect()
    }

    /// GSU search and mask construction for one sample.
    pub fn prepare(&self, s: &Sample) -> Result<Prepared> {
        let positions = gsu_positions(&s.history, s.request.target.category_id, self.config.k);
        let masks = if self.tower.is_some() && !positions.is_empty() {
            let events: Vec<BehaviorEvent> = positions.iter().map(|&i| s.history[i]).collect();
            let seq = CompressedSequence::from_events(&events, self.config.k);
            let m = build_masks(&seq, &s.request, &self.config.masks, self.variant.strategy())?;
            (0..positions.len()).flat_map(|j| [m.hour[j], m.week[j], m.geo[j]]).collect()
        } else {
            Vec::new()
        };
        Ok(Prepared { positions, masks })
    }

    pub fn forward(&self, s: &Sample, p: &Prepared) -> Result<Forward> {
        let g = &self.config.masks.grouping;
        let n = p.n();
        let rows: Vec<[usize; EVENT_FIELDS]> = p.positions.iter().map(|&i| self.emb.event_rows(&s.history[i], g)).collect();
        let req_rows = self.emb.request_rows(&s.request, g);
        let mut c = Vec::new();
        self.emb.gather(&ALL_REQUEST, &req_rows, &mut c);

        let (mut input, body) = match &self.tower {
            None => {
                let d = ITEM_SIDE.len() * self.config.embedding_dim;
                let mut pooled = vec![0.0; d];
                let mut buf = Vec::with_capacity(d);
                for r in &rows {
                    buf.clear();
                    self.emb.gather(&ITEM_SIDE, r, &mut buf);
                    axpy(1.0 / n as f64, &buf, &mut pooled);
                }
                (pooled, Body::Baseline { rows })
            }
            Some(t) => {
                let (features, cache) = self.stim_forward(t, s, p, rows, &req_rows, &c)?;
                (features, Body::Stim(Box::new(cache)))
            }
        };
        let feat_dim = input.len();
        input.extend_from_slice(&c);
        let mut head_caches = Vec::with_capacity(self.heads.len());
        let mut logits = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let hc = h.forward_flat(&input, 1)?;
            logits.push(hc.output()[0]);
            head_caches.push(hc);
        }
        Ok(Forward {
            logits,
            req_rows,
            feat_dim,
            head_caches,
            body,
        })
    }

    fn stim_forward(
        &self,
        t: &Tower,
        s: &Sample,
        p: &Prepared,
        rows: Vec<[usize; EVENT_FIELDS]>,
        req_rows: &[usize; REQUEST_FIELDS],
        c: &[f64],
    ) -> Result<(Vec<f64>, StimCache)> {
        let n = p.n();
        let mut event_x = Vec::with_capacity(n * EVENT_FIELDS * self.config.embedding_dim);
        for r in &rows {
            self.emb.gather(&ALL_EVENT, r, &mut event_x);
        }
        let mut keys_raw = Vec::new();
        t.key_proj.affine(&event_x, n, &mut keys_raw);
        let keys = t.hmin.prepare_keys(&keys_raw, n)?;

        let (refined, refine) = match (&t.refiner, n) {
            (Some(r), n) if n > 0 => {
                let fc = r.forward_flat(&p.masks, n)?;
                (fc.output().to_vec(), Some(fc))
            }
            _ => (p.masks.clone(), None),
        };
        let masks: [Vec<f64>; 3] = std::array::from_fn(|m| (0..n).map(|j| refined[j * 3 + m]).collect());

        let (query, query_input, qvecs) = match &t.query {
            QueryNet::Moe(moe) => {
                let mut x = Vec::new();
                self.emb.gather(&MOE_FIELDS, req_rows, &mut x);
                let holiday = self.variant.uses_holiday() && s.request.is_holiday == 1;
                let mc = moe.forward(&x, holiday, self.variant.query_count() == 5)?;
                let qv = mc.bundle.queries.clone();
                (QueryFwd::Moe(Box::new(mc)), x, qv)
            }
            QueryNet::Concat(cq) => {
                let q = cq.forward(c)?;
                (QueryFwd::Concat, c.to_vec(), vec![q])
            }
        };
        let queries = qvecs.iter().map(|q| t.hmin.prepare_query(q)).collect::<Result<Vec<_>>>()?;
        let nq = queries.len();
        let mut attended = Vec::with_capacity(3 * nq);
        let mut features = Vec::with_capacity(3 * nq * t.hmin.config().output_dim());
        for mask in &masks {
            for qc in &queries {
                let a = t.hmin.attend(&keys, qc, mask);
                features.extend_from_slice(&a.output);
                attended.push(a);
            }
        }
        Ok((
            features,
            StimCache {
                rows,
                event_x,
                keys,
                masks,
                refine,
                query,
                query_input,
                queries,
                attended,
            },
        ))
    }

    /// Per-head norms of every projected query before normalization; empty
    /// for the baseline.
    pub fn query_norms(&self, s: &Sample, p: &Prepared) -> Result<Vec<f64>> {
        let fwd = self.forward(s, p)?;
        Ok(match &fwd.body {
            Body::Baseline { .. } => Vec::new(),
            Body::Stim(c) => c.queries.iter().flat_map(|q| q.norms().to_vec()).collect(),
        })
    }

    /// Accumulates parameter gradients for upstream logit gradients.
    pub fn backward(&mut self, fwd: &Forward, dlogits: &[f64]) {
        let mut d_in = vec![0.0; fwd.feat_dim + REQUEST_FIELDS * self.config.embedding_dim];
        for ((h, hc), &dz) in self.heads.iter_mut().zip(&fwd.head_caches).zip(dlogits) {
            if dz != 0.0 {
                let g = h.backward(hc, &[dz]);
                axpy(1.0, &g, &mut d_in);
            }
        }
        let (d_feat, d_c) = d_in.split_at(fwd.feat_dim);
        let mut d_c = d_c.to_vec();
        match &fwd.body {
            Body::Baseline { rows } => {
                let n = rows.len() as f64;
                let g: Vec<f64> = d_feat.iter().map(|v| v / n).collect();
                for r in rows {
                    self.emb.scatter(&ITEM_SIDE, r, &g);
                }
            }
            Body::Stim(cache) => {
                let t = self.tower.as_mut().expect("stim body implies tower");
                stim_backward(t, &mut self.emb, cache, &fwd.req_rows, d_feat, &mut d_c);
            }
        }
        self.emb.scatter(&ALL_REQUEST, &fwd.req_rows, &d_c);
    }
}

fn stim_backward(
    t: &mut Tower,
    emb: &mut Embeddings,
    cache: &StimCache,
    req_rows: &[usize; REQUEST_FIELDS],
    d_feat: &[f64],
    d_c: &mut [f64],
) {
    let n = cache.keys.n;
    let nq = cache.queries.len();
    let od = t.hmin.config().output_dim();
    let mut kg = t.hmin.key_grad(&cache.keys);
    let mut d_masks: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
    let mut d_queries = Vec::with_capacity(nq);
    for (q, qc) in cache.queries.iter().enumerate() {
        let mut qg = t.hmin.query_grad();
        for m in 0..3 {
            let idx = m * nq + q;
            t.hmin.attend_backward(
                &cache.keys,
                qc,
                &cache.masks[m],
                &cache.attended[idx],
                &d_feat[idx * od..(idx + 1) * od],
                &mut kg,
                &mut qg,
                &mut d_masks[m],
            );
        }
        d_queries.push(t.hmin.query_backward(qc, &qg));
    }

    match (&mut t.query, &cache.query) {
        (QueryNet::Moe(moe), QueryFwd::Moe(mc)) => {
            let dx = moe.backward(mc, &d_queries);
            emb.scatter(&MOE_FIELDS, req_rows, &dx);
        }
        (QueryNet::Concat(cq), QueryFwd::Concat) => {
            let dx = cq.backward(&cache.query_input, &d_queries[0]);
            axpy(1.0, &dx, d_c);
        }
        _ => unreachable!("query cache matches the query network"),
    }

    if n == 0 {
        return;
    }
    let dkeys = t.hmin.keys_backward(&cache.keys, &kg);
    let d_events = t.key_proj.affine_backward(&cache.event_x, n, &dkeys);
    let w = EVENT_FIELDS * emb.item.dim();
    for (j, r) in cache.rows.iter().enumerate() {
        emb.scatter(&ALL_EVENT, r, &d_events[j * w..(j + 1) * w]);
    }
    if let (Some(refiner), Some(rc)) = (&mut t.refiner, &cache.refine) {
        let d: Vec<f64> = (0..n).flat_map(|j| [d_masks[0][j], d_masks[1][j], d_masks[2][j]]).collect();
        refiner.backward(rc, &d);
    }
}

impl Module for Tower {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.key_proj.visit(&join(prefix, "key_proj"), f);
        if let Some(r) = &self.refiner {
            r.visit(&join(prefix, "refiner"), f);
        }
        match &self.query {
            QueryNet::Moe(m) => m.visit(&join(prefix, "moe"), f),
            QueryNet::Concat(c) => c.visit(&join(prefix, "concat_query"), f),
        }
        self.hmin.visit(&join(prefix, "hmin"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.key_proj.visit_mut(&join(prefix, "key_proj"), f);
        if let Some(r) = &mut self.refiner {
            r.visit_mut(&join(prefix, "refiner"), f);
        }
        match &mut self.query {
            QueryNet::Moe(m) => m.visit_mut(&join(prefix, "moe"), f),
            QueryNet::Concat(c) => c.visit_mut(&join(prefix, "concat_query"), f),
        }
        self.hmin.visit_mut(&join(prefix, "hmin"), f);
    }
}

impl Module for StimModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Parameter)) {
        self.emb.visit(&join(prefix, "emb"), f);
        if let Some(t) = &self.tower {
            t.visit(&join(prefix, "tower"), f);
        }
        for (h, name) in self.heads.iter().zip(self.config.task.heads()) {
            h.visit(&join(prefix, &format!("head_{name}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.emb.visit_mut(&join(prefix, "emb"), f);
        if let Some(t) = &mut self.tower {
            t.visit_mut(&join(prefix, "tower"), f);
        }
        let names = self.config.task.heads();
        for (h, name) in self.heads.iter_mut().zip(names) {
            h.visit_mut(&join(prefix, &format!("head_{name}")), f);
        }
    }
}

/// Builds a model from a checkpoint's stored config and restores its weights.
pub fn load_model(path: &std::path::Path) -> Result<StimModel> {
    let ck = crate::numeric::checkpoint::load(path)?;
    let config: ModelConfig = serde_json::from_value(ck.header.config.clone())
        .map_err(|e| Error::Checkpoint(format!("stored config unreadable: {e}")))?;
    let mut model = StimModel::new(config)?;
    ck.restore_into(&mut model)?;
    Ok(model)
}

pub fn save_model(path: &std::path::Path, model: &StimModel) -> Result<()> {
    let cfg = serde_json::to_value(model.config())?;
    crate::numeric::checkpoint::save(path, cfg, model)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forgetting::{MaskConfig, MaskStrategy};
use crate::hmin::HminConfig;
use crate::moe::MoEConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Stim,
    /// Target-filtered sequence, mean-pooled item-side embeddings, no
    /// spatiotemporal modeling.
    GsuBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Ctr,
    Ctcvr,
    Both,
}

impl Task {
    pub fn heads(self) -> &'static [&'static str] {
        match self {
            Task::Ctr => &["ctr"],
            Task::Ctcvr => &["ctcvr"],
            Task::Both => &["ctr", "ctcvr"],
        }
    }
}

/// Mask-module ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum MaskVariant {
    /// Plain decay, no review points.
    N1,
    /// Review points with identical peaks.
    N2,
    /// Raw masks without the refiner.
    N3,
    #[default]
    N4,
}

/// Query-module ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum QueryVariant {
    /// One query projected from concatenated item and scene embeddings.
    M1,
    /// `Q¹` without holiday enhancement.
    M2,
    /// `Q¹` with holiday enhancement.
    M3,
    #[default]
    M4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Variant {
    pub mask: MaskVariant,
    pub query: QueryVariant,
}

impl Variant {
    pub fn strategy(self) -> MaskStrategy {
        match self.mask {
            MaskVariant::N1 => MaskStrategy::DecayOnly,
            MaskVariant::N2 => MaskStrategy::IdenticalReviews,
            MaskVariant::N3 | MaskVariant::N4 => MaskStrategy::Reviewed,
        }
    }

    pub fn refines(self) -> bool {
        self.mask != MaskVariant::N3
    }

    pub fn query_count(self) -> usize {
        if self.query == QueryVariant::M4 {
            5
        } else {
            1
        }
    }

    pub fn uses_holiday(self) -> bool {
        matches!(self.query, QueryVariant::M3 | QueryVariant::M4)
    }

    pub fn label(self) -> String {
        format!("{:?}/{:?}", self.mask, self.query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSizes {
    pub item: usize,
    pub category: usize,
    pub shop: usize,
}

impl Default for VocabSizes {
    fn default() -> Self {
        Self {
            item: 1024,
            category: 64,
            shop: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub embedding_dim: usize,
    /// Id vocabularies; ids outside `1..size` share the out-of-vocabulary row 0.
    pub vocab: VocabSizes,
    /// Compressed sequence length.
    pub k: usize,
    pub masks: MaskConfig,
    pub moe: MoEConfig,
    pub hmin: HminConfig,
    pub head_widths: Vec<usize>,
    pub task: Task,
    /// Ablation switches such as `["N1"]` or `["N3", "M2"]`.
    pub ablations: Vec<String>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Stim,
            embedding_dim: 8,
            vocab: VocabSizes::default(),
            k: 50,
            masks: MaskConfig::default(),
            moe: MoEConfig::default(),
            hmin: HminConfig::default(),
            head_widths: vec![64, 32],
            task: Task::Ctr,
            ablations: Vec::new(),
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<Variant> {
        if self.embedding_dim == 0 || self.k == 0 {
            return Err(Error::Config("embedding_dim and k must be positive".into()));
        }
        if self.head_widths.contains(&0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        if self.vocab.item < 2 || self.vocab.category < 2 || self.vocab.shop < 2 {
            return Err(Error::Config("vocabularies need at least one row besides OOV".into()));
        }
        self.masks.curves.validate()?;
        self.masks.grouping.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.moe.validate()?;
        self.hmin.validate()?;
        if self.moe.d_q != self.hmin.d_q {
            return Err(Error::Config(format!(
                "query width mismatch: moe.d_q = {}, hmin.d_q = {}",
                self.moe.d_q, self.hmin.d_q
            )));
        }
        apply_ablation(self)
    }

    /// Same config with the given ablation switches.
    pub fn with_ablations(&self, switches: &[&str]) -> Self {
        Self {
            ablations: switches.iter().map(|s| s.to_string()).collect(),
            ..self.clone()
        }
    }
}

/// Resolves ablation switches to the wired variant. At most one switch per
/// family; none means the full model (N4/M4).
pub fn apply_ablation(config: &ModelConfig) -> Result<Variant> {
    let mut mask: Option<MaskVariant> = None;
    let mut query: Option<QueryVariant> = None;
    for raw in &config.ablations {
        let s = raw.trim().to_ascii_uppercase();
        let (m, q) = match s.as_str() {
            "N1" => (Some(MaskVariant::N1), None),
            "N2" => (Some(MaskVariant::N2), None),
            "N3" => (Some(MaskVariant::N3), None),
            "N4" => (Some(MaskVariant::N4), None),
            "M1" => (None, Some(QueryVariant::M1)),
            "M2" => (None, Some(QueryVariant::M2)),
            "M3" => (None, Some(QueryVariant::M3)),
            "M4" => (None, Some(QueryVariant::M4)),
            _ => return Err(Error::Config(format!("unknown ablation switch '{raw}'"))),
        };
        if let Some(m) = m {
            if mask.is_some_and(|prev| prev != m) {
                return Err(Error::Config(format!("conflicting mask ablations {:?} and {m:?}", mask.unwrap())));
            }
            mask = Some(m);
        }
        if let Some(q) = q {
            if query.is_some_and(|prev| prev != q) {
                return Err(Error::Config(format!("conflicting query ablations {:?} and {q:?}", query.unwrap())));
            }
            query = Some(q);
        }
    }
    Ok(Variant {
        mask: mask.unwrap_or_default(),
        query: query.unwrap_or_default(),
    })
}

//! Samples, tabular and JSONL ingestion, time-based splitting and the
//! synthetic planted-periodicity generator.

mod loader;
mod schema;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

use crate::gsu::BehaviorEvent;
use crate::moe::RequestContext;

pub use loader::{
    load_dataset, load_split_dir, write_csv, write_jsonl, DataFormat, LoadOptions, LoadReport, RowError, SampleReader,
};
pub use schema::DatasetSchema;
pub use split::{time_split, DAY_SECONDS};
pub use synth::{design_positive_rate, generate_synthetic, synthesize, PlantedProfile, SyntheticData, SyntheticSpec, CENTERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub click: u8,
    /// Click followed by conversion.
    #[serde(default)]
    pub conversion: u8,
}

/// One request: who asked, when and where, for which candidate, with the
/// user's history up to that moment (oldest first) and the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub user_id: i64,
    pub request: RequestContext,
    pub history: Vec<BehaviorEvent>,
    pub labels: Labels,
}

//! General Search Unit: target-conditioned hard search that compresses a raw
//! behavior sequence to `k` slots.

use serde::{Deserialize, Serialize};

use crate::context::{Geohash6, GeoGrouping, GroupAssignment, Weekday};
use crate::error::Result;

/// One historical user action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub item_id: i64,
    pub category_id: i64,
    pub shop_id: i64,
    /// Seconds since the unix epoch.
    pub timestamp: i64,
    pub hour_of_day: u8,
    pub weekday: Weekday,
    pub geohash6: Geohash6,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

impl BehaviorEvent {
    pub fn groups(&self, grouping: &GeoGrouping) -> Result<GroupAssignment> {
        GroupAssignment::of(self.hour_of_day, self.weekday, &self.geohash6, grouping)
    }
}

/// `k` slots holding the retained events oldest to newest, followed by padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedSequence {
    slots: Vec<Option<BehaviorEvent>>,
}

impl CompressedSequence {
    /// Builds a sequence from already-ordered events; anything beyond `k` is
    /// dropped from the old end.
    pub fn from_events(events: &[BehaviorEvent], k: usize) -> Self {
        let start = events.len().saturating_sub(k);
        let mut slots: Vec<Option<BehaviorEvent>> = events[start..].iter().copied().map(Some).collect();
        slots.resize(k, None);
        Self { slots }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Option<BehaviorEvent>] {
        &self.slots
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    pub fn valid_len(&self) -> usize {
        self.slots.iter().take_while(|s| s.is_some()).count()
    }

    /// Valid events, oldest first.
    pub fn events(&self) -> impl Iterator<Item = &BehaviorEvent> {
        self.slots.iter().map_while(Option::as_ref)
    }
}

/// Keeps the events whose category equals `target_category`, retaining the
/// `k` most recent in chronological order and padding the tail.
///
/// `sequence` must be ordered oldest to newest.
pub fn gsu_search(sequence: &[BehaviorEvent], target_category: i64, k: usize) -> CompressedSequence {
    let picked: Vec<BehaviorEvent> = gsu_positions(sequence, target_category, k)
        .into_iter()
        .map(|i| sequence[i])
        .collect();
    CompressedSequence::from_events(&picked, k)
}

/// Indices into `sequence` of the events [`gsu_search`] keeps, oldest first.
pub fn gsu_positions(sequence: &[BehaviorEvent], target_category: i64, k: usize) -> Vec<usize> {
    assert!(k >= 1, "GSU length must be positive");
    let mut picked: Vec<usize> = (0..sequence.len())
        .rev()
        .filter(|&i| sequence[i].category_id == target_category)
        .take(k)
        .collect();
    picked.reverse();
    picked
}

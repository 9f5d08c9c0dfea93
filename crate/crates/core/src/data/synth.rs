use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::DAY_SECONDS;
use super::{write_csv, write_jsonl, DatasetSchema, Labels, Sample};
use crate::context::{assign_hour_group, hour_of_day, Geohash6, HolidayCalendar, HourGroup, Weekday};
use crate::error::{Error, Result};
use crate::gsu::BehaviorEvent;
use crate::moe::{RequestContext, TargetItem};

/// City centers used for home locations: one per geohash group.
pub const CENTERS: [(&str, f64, f64); 3] = [
    ("paris", 48.8566, 2.3522),
    ("hong_kong", 22.3193, 114.1694),
    ("shanghai", 31.2304, 121.4737),
];

/// Planted pattern: every user has a preferred category and a preferred hour
/// group. Habitual history events fall in both; a request is a "match" when
/// the candidate is in the preferred category and the request hour is in the
/// preferred group, and matches click with probability `p_signal` while
/// everything else clicks with `1 − p_signal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub users: usize,
    pub categories: usize,
    pub items_per_category: usize,
    pub shops: usize,
    pub train_rows_per_user: usize,
    pub test_rows_per_user: usize,
    /// Request days; the last one is the test day.
    pub days: usize,
    /// Days of history before the first request day.
    pub history_days: usize,
    pub history_min: usize,
    pub history_max: usize,
    /// Share of users drawing fewer than 10 events in total.
    pub cold_start_fraction: f64,
    /// Probability that a history event follows the user's habit.
    pub p_habit: f64,
    /// Probability that the candidate is in the user's preferred category.
    pub p_pref: f64,
    pub p_signal: f64,
    /// Probability of flipping the click label.
    pub label_noise: f64,
    /// Probability that an event or request happens at the user's home.
    pub p_home: f64,
    /// Start of the first request day (unix seconds, UTC midnight).
    pub start_timestamp: i64,
    pub holidays: Vec<NaiveDate>,
    pub max_history: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 2500,
            categories: 20,
            items_per_category: 25,
            shops: 200,
            train_rows_per_user: 20,
            test_rows_per_user: 4,
            days: 8,
            history_days: 14,
            history_min: 20,
            history_max: 80,
            cold_start_fraction: 0.1,
            p_habit: 0.8,
            p_pref: 0.5,
            p_signal: 0.9,
            label_noise: 0.0,
            p_home: 0.85,
            start_timestamp: 1_704_067_200,
            holidays: vec![NaiveDate::from_ymd_opt(2024, 1, 3).unwrap()],
            max_history: 200,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(self.p_signal > 0.5 && self.p_signal <= 1.0) {
            return bad("p_signal must be in (0.5, 1]");
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad("label_noise must be in [0, 0.5)");
        }
        for (name, p) in [
            ("p_habit", self.p_habit),
            ("p_pref", self.p_pref),
            ("p_home", self.p_home),
            ("cold_start_fraction", self.cold_start_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.users == 0 || self.categories < 2 || self.items_per_category == 0 || self.shops == 0 {
            return bad("users, items and shops must be positive and categories >= 2");
        }
        if self.days < 2 || self.history_min > self.history_max || self.max_history == 0 {
            return bad("need days >= 2, history_min <= history_max and max_history > 0");
        }
        if self.start_timestamp.rem_euclid(DAY_SECONDS) != 0 {
            return bad("start_timestamp must be a UTC midnight");
        }
        Ok(())
    }

    /// Last second of training time; the day after it is the test day.
    pub fn boundary(&self) -> i64 {
        self.start_timestamp + (self.days as i64 - 1) * DAY_SECONDS - 1
    }
}

/// Expected click rate implied by the spec.
pub fn design_positive_rate(spec: &SyntheticSpec) -> f64 {
    let p_match = spec.p_pref / 3.0;
    let r = p_match * spec.p_signal + (1.0 - p_match) * (1.0 - spec.p_signal);
    r * (1.0 - spec.label_noise) + (1.0 - r) * spec.label_noise
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub calendar: HolidayCalendar,
    pub boundary: i64,
    pub profiles: Vec<PlantedProfile>,
}

/// A user's planted habit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedProfile {
    pub user_id: i64,
    pub category: i64,
    pub hour_group: HourGroup,
    /// Index into [`CENTERS`].
    pub home: usize,
}

impl PlantedProfile {
    /// Whether a request hits the planted (category, hour group) rule.
    pub fn matches(&self, s: &Sample) -> bool {
        s.request.target.category_id == self.category
            && assign_hour_group(s.request.hour_of_day).ok() == Some(self.hour_group)
    }
}

struct User {
    id: i64,
    category: i64,
    hour_group: HourGroup,
    home: usize,
    home_cell: Geohash6,
    events: Vec<BehaviorEvent>,
}

fn cell_near(center: usize, rng: &mut ChaCha8Rng) -> Geohash6 {
    let (_, lat, lon) = CENTERS[center];
    Geohash6::from_coords(lat + rng.random_range(-0.05..0.05), lon + rng.random_range(-0.05..0.05))
        .expect("city centers are valid coordinates")
}

fn item_in(cat: i64, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (i64, i64) {
    let item = cat * spec.items_per_category as i64 + rng.random_range(0..spec.items_per_category as i64) + 1;
    let shop = (item * 7919).rem_euclid(spec.shops as i64) + 1;
    (item, shop)
}

fn random_hour(group: HourGroup, rng: &mut ChaCha8Rng) -> u8 {
    let hours = group.hours();
    hours[rng.random_range(0..hours.len())]
}

fn place(user: &User, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Geohash6 {
    if rng.random_bool(spec.p_home) {
        user.home_cell
    } else {
        let other = (user.home + rng.random_range(1..CENTERS.len())) % CENTERS.len();
        cell_near(other, rng)
    }
}

fn moment(day_start: i64, hour: u8, rng: &mut ChaCha8Rng) -> i64 {
    day_start + hour as i64 * 3_600 + rng.random_range(0..3_600)
}

fn make_user(id: i64, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> User {
    let home = rng.random_range(0..CENTERS.len());
    let mut user = User {
        id,
        category: rng.random_range(0..spec.categories as i64) + 1,
        hour_group: HourGroup::ALL[rng.random_range(0..3)],
        home,
        home_cell: cell_near(home, rng),
        events: Vec::new(),
    };
    let n = if rng.random_bool(spec.cold_start_fraction) {
        rng.random_range(0..10)
    } else {
        rng.random_range(spec.history_min..=spec.history_max)
    };
    let first_day = spec.start_timestamp - spec.history_days as i64 * DAY_SECONDS;
    let total_days = (spec.history_days + spec.days) as i64;
    for _ in 0..n {
        let day = first_day + rng.random_range(0..total_days) * DAY_SECONDS;
        let (cat, hour, geo) = if rng.random_bool(spec.p_habit) {
            (user.category, random_hour(user.hour_group, rng), user.home_cell)
        } else {
            let cat = rng.random_range(0..spec.categories as i64) + 1;
            (cat, rng.random_range(0..24), place(&user, spec, rng))
        };
        let (item, shop) = item_in(cat, spec, rng);
        let ts = moment(day, hour, rng);
        user.events.push(BehaviorEvent {
            item_id: item,
            category_id: cat,
            shop_id: shop,
            timestamp: ts,
            hour_of_day: hour_of_day(ts),
            weekday: Weekday::from_timestamp(ts),
            geohash6: geo,
            price: None,
        });
    }
    user.events.sort_by_key(|e| e.timestamp);
    user
}

fn make_request(user: &User, day: usize, spec: &SyntheticSpec, cal: &HolidayCalendar, rng: &mut ChaCha8Rng) -> Sample {
    let group = HourGroup::ALL[rng.random_range(0..3)];
    let hour = random_hour(group, rng);
    let ts = moment(spec.start_timestamp + day as i64 * DAY_SECONDS, hour, rng);
    let cat = if rng.random_bool(spec.p_pref) {
        user.category
    } else {
        let c = rng.random_range(1..spec.categories as i64);
        (user.category - 1 + c).rem_euclid(spec.categories as i64) + 1
    };
    let (item, shop) = item_in(cat, spec, rng);
    let is_match = cat == user.category && assign_hour_group(hour).ok() == Some(user.hour_group);
    let p = if is_match { spec.p_signal } else { 1.0 - spec.p_signal };
    let mut click = rng.random_bool(p);
    if rng.random_bool(spec.label_noise) {
        click = !click;
    }
    let convert = click && rng.random_bool(if is_match { 0.6 } else { 0.3 });
    let past = user.events.partition_point(|e| e.timestamp < ts);
    let history = user.events[past.saturating_sub(spec.max_history)..past].to_vec();
    Sample {
        user_id: user.id,
        request: RequestContext {
            timestamp: ts,
            hour_of_day: hour_of_day(ts),
            weekday: Weekday::from_timestamp(ts),
            geohash6: place(user, spec, rng),
            is_holiday: cal.is_holiday_at(ts),
            target: TargetItem {
                item_id: item,
                category_id: cat,
                shop_id: shop,
            },
        },
        history,
        labels: Labels {
            click: click as u8,
            conversion: convert as u8,
        },
    }
}

/// In-memory generation; deterministic in `(spec, seed)`.
pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calendar = HolidayCalendar::new(spec.holidays.iter().copied());
    let mut train = Vec::with_capacity(spec.users * spec.train_rows_per_user);
    let mut test = Vec::with_capacity(spec.users * spec.test_rows_per_user);
    let mut profiles = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let user = make_user(u as i64 + 1, spec, &mut rng);
        profiles.push(PlantedProfile {
            user_id: user.id,
            category: user.category,
            hour_group: user.hour_group,
            home: user.home,
        });
        for _ in 0..spec.train_rows_per_user {
            let day = rng.random_range(0..spec.days - 1);
            train.push(make_request(&user, day, spec, &calendar, &mut rng));
        }
        for _ in 0..spec.test_rows_per_user {
            test.push(make_request(&user, spec.days - 1, spec, &calendar, &mut rng));
        }
    }
    train.sort_by_key(|s| (s.request.timestamp, s.user_id));
    test.sort_by_key(|s| (s.request.timestamp, s.user_id));
    Ok(SyntheticData {
        train,
        test,
        calendar,
        boundary: spec.boundary(),
        profiles,
    })
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    seed: u64,
    spec: &'a SyntheticSpec,
    boundary: i64,
    boundary_utc: String,
    design_positive_rate: f64,
    train_rows: usize,
    test_rows: usize,
}

/// Writes `train`/`test` as CSV and JSONL, `holidays.txt` and `meta.json`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<SyntheticData> {
    let data = synthesize(spec, seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let schema = DatasetSchema::default();
    write_csv(&out.join("train.csv"), &data.train, &schema)?;
    write_csv(&out.join("test.csv"), &data.test, &schema)?;
    write_jsonl(&out.join("train.jsonl"), &data.train)?;
    write_jsonl(&out.join("test.jsonl"), &data.test)?;
    let hol = out.join("holidays.txt");
    fs::write(&hol, data.calendar.to_file_string()).map_err(|e| Error::io(&hol, e))?;
    let meta = Meta {
        seed,
        spec,
        boundary: data.boundary,
        boundary_utc: DateTime::from_timestamp(data.boundary, 0).map(|d| d.to_rfc3339()).unwrap_or_default(),
        design_positive_rate: design_positive_rate(spec),
        train_rows: data.train.len(),
        test_rows: data.test.len(),
    };
    let mp = out.join("meta.json");
    fs::write(&mp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mp, e))?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{assign_geo_group, GeoGroup};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            users: 50,
            train_rows_per_user: 4,
            test_rows_per_user: 2,
            ..Default::default()
        }
    }

    #[test]
    fn centers_cover_all_geo_groups() {
        let groups: Vec<GeoGroup> = CENTERS
            .iter()
            .map(|&(_, lat, lon)| assign_geo_group(Geohash6::from_coords(lat, lon).unwrap().as_str()).unwrap())
            .collect();
        assert_eq!(groups, vec![GeoGroup::NonW, GeoGroup::W0j, GeoGroup::Wkz]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synthesize(&small(), 3).unwrap();
        let b = synthesize(&small(), 3).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = synthesize(&small(), 4).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_respects_boundary_and_history_precedes_request() {
        let d = synthesize(&small(), 1).unwrap();
        assert_eq!(d.train.len(), 200);
        assert_eq!(d.test.len(), 100);
        assert!(d.train.iter().all(|s| s.request.timestamp <= d.boundary));
        assert!(d
            .test
            .iter()
            .all(|s| s.request.timestamp > d.boundary && s.request.timestamp <= d.boundary + DAY_SECONDS));
        for s in d.train.iter().chain(&d.test) {
            assert!(s.history.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            assert!(s.history.iter().all(|e| e.timestamp < s.request.timestamp));
        }
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        for spec in [
            SyntheticSpec {
                p_signal: 0.5,
                ..small()
            },
            SyntheticSpec {
                categories: 1,
                ..small()
            },
            SyntheticSpec {
                start_timestamp: 5,
                ..small()
            },
        ] {
            assert!(matches!(synthesize(&spec, 0), Err(Error::Config(_))));
        }
    }

    #[test]
    fn design_rate_arithmetic() {
        let spec = SyntheticSpec {
            p_pref: 0.6,
            p_signal: 1.0,
            label_noise: 0.0,
            ..Default::default()
        };
        assert!((design_positive_rate(&spec) - 0.2).abs() < 1e-15);
    }
}

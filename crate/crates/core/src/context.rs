//! Spatiotemporal vocabulary: geohash codec, hour/week/geohash grouping and
//! the holiday calendar.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

fn alphabet_index(c: u8) -> Option<usize> {
    GEOHASH_ALPHABET.iter().position(|&a| a == c)
}

/// Standard base-32 geohash of a coordinate.
pub fn geohash_encode(lat: f64, lon: f64, precision: usize) -> Result<String> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Domain(format!("coordinate ({lat}, {lon}) out of range")));
    }
    if !(1..=12).contains(&precision) {
        return Err(Error::Domain(format!("geohash precision {precision} not in 1..=12")));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0, 90.0);
    let (mut lon_lo, mut lon_hi) = (-180.0, 180.0);
    let mut out = String::with_capacity(precision);
    let mut even = true;
    for _ in 0..precision {
        let mut idx = 0usize;
        for _ in 0..5 {
            let (lo, hi, v) = if even {
                (&mut lon_lo, &mut lon_hi, lon)
            } else {
                (&mut lat_lo, &mut lat_hi, lat)
            };
            let mid = (*lo + *hi) / 2.0;
            idx <<= 1;
            if v >= mid {
                idx |= 1;
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
        out.push(GEOHASH_ALPHABET[idx] as char);
    }
    Ok(out)
}

/// Cell bounds of a decoded geohash.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoCell {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoCell {
    pub fn center(&self) -> (f64, f64) {
        (
            (self.lat_min + self.lat_max) / 2.0,
            (self.lon_min + self.lon_max) / 2.0,
        )
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

pub fn geohash_decode(hash: &str) -> Result<GeoCell> {
    if hash.is_empty() || hash.len() > 12 {
        return Err(Error::Domain(format!("geohash {hash:?} has invalid length")));
    }
    let mut cell = GeoCell {
        lat_min: -90.0,
        lat_max: 90.0,
        lon_min: -180.0,
        lon_max: 180.0,
    };
    let mut even = true;
    for c in hash.bytes() {
        let idx = alphabet_index(c)
            .ok_or_else(|| Error::Domain(format!("invalid geohash character {:?}", c as char)))?;
        for bit in (0..5).rev() {
            let set = (idx >> bit) & 1 == 1;
            let (lo, hi) = if even {
                (&mut cell.lon_min, &mut cell.lon_max)
            } else {
                (&mut cell.lat_min, &mut cell.lat_max)
            };
            let mid = (*lo + *hi) / 2.0;
            if set {
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
    }
    Ok(cell)
}

/// Validated six-symbol geohash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Geohash6([u8; 6]);

impl Geohash6 {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("geohash symbols are ASCII")
    }

    pub fn from_coords(lat: f64, lon: f64) -> Result<Self> {
        geohash_encode(lat, lon, 6)?.parse()
    }
}

impl FromStr for Geohash6 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 6 {
            return Err(Error::Domain(format!("{s:?} is not a geohash6")));
        }
        if let Some(&c) = b.iter().find(|&&c| alphabet_index(c).is_none()) {
            return Err(Error::Domain(format!(
                "invalid geohash character {:?} in {s:?}",
                c as char
            )));
        }
        Ok(Self(b.try_into().unwrap()))
    }
}

impl fmt::Display for Geohash6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Geohash6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Geohash6({})", self.as_str())
    }
}

impl Serialize for Geohash6 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Geohash6 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ];

    /// Monday = 0 … Sunday = 6.
    pub fn from_index(i: u32) -> Result<Self> {
        Self::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::Domain(format!("weekday index {i} not in 0..=6")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Weekday of a UTC unix timestamp.
    pub fn from_timestamp(ts: i64) -> Self {
        // 1970-01-01 was a Thursday.
        let days = ts.div_euclid(86_400);
        Self::ALL[(days + 3).rem_euclid(7) as usize]
    }
}

/// Hour of day of a UTC unix timestamp.
pub fn hour_of_day(ts: i64) -> u8 {
    (ts.rem_euclid(86_400) / 3_600) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HourGroup {
    Morning,
    Midday,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeekGroup {
    Weekday,
    Weekend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeoGroup {
    /// First character differs from the primary character.
    NonW,
    /// Primary first character, second character in `0`..=`j`.
    W0j,
    /// Primary first character, second character in `k`..=`z`.
    Wkz,
}

impl HourGroup {
    pub const ALL: [HourGroup; 3] = [HourGroup::Morning, HourGroup::Midday, HourGroup::Night];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Hours belonging to the group.
    pub fn hours(self) -> Vec<u8> {
        (0..24).filter(|&h| assign_hour_group(h).ok() == Some(self)).collect()
    }
}

impl WeekGroup {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl GeoGroup {
    pub const ALL: [GeoGroup; 3] = [GeoGroup::NonW, GeoGroup::W0j, GeoGroup::Wkz];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Morning 3–10, Midday 11–16, Night 17–23 and 0–2.
pub fn assign_hour_group(hour: u8) -> Result<HourGroup> {
    match hour {
        3..=10 => Ok(HourGroup::Morning),
        11..=16 => Ok(HourGroup::Midday),
        17..=23 | 0..=2 => Ok(HourGroup::Night),
        _ => Err(Error::Domain(format!("hour {hour} not in 0..=23"))),
    }
}

pub fn assign_week_group(day: Weekday) -> WeekGroup {
    match day {
        Weekday::Sat | Weekday::Sun => WeekGroup::Weekend,
        _ => WeekGroup::Weekday,
    }
}

/// Geohash grouping rule. The defaults reproduce the three-way split on the
/// first character being `w` and the second falling in `0`–`j` or `k`–`z`,
/// with ranges taken in geohash alphabet order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoGrouping {
    pub primary: char,
    /// First second-character of the upper range.
    pub split: char,
}

impl Default for GeoGrouping {
    fn default() -> Self {
        Self {
            primary: 'w',
            split: 'k',
        }
    }
}

impl GeoGrouping {
    pub fn validate(&self) -> Result<()> {
        for c in [self.primary, self.split] {
            if !c.is_ascii() || alphabet_index(c as u8).is_none() {
                return Err(Error::Config(format!("{c:?} is not a geohash character")));
            }
        }
        Ok(())
    }

    pub fn assign(&self, geohash: &str) -> Result<GeoGroup> {
        Ok(self.assign_code(&geohash.parse()?))
    }

    pub fn assign_code(&self, code: &Geohash6) -> GeoGroup {
        let b = code.0;
        if b[0] != self.primary as u8 {
            return GeoGroup::NonW;
        }
        let split = alphabet_index(self.split as u8).unwrap_or(18);
        if alphabet_index(b[1]).unwrap() < split {
            GeoGroup::W0j
        } else {
            GeoGroup::Wkz
        }
    }
}

pub fn assign_geo_group(geohash6: &str) -> Result<GeoGroup> {
    GeoGrouping::default().assign(geohash6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub hour: HourGroup,
    pub week: WeekGroup,
    pub geo: GeoGroup,
}

impl GroupAssignment {
    pub fn compute(hour: u8, weekday: Weekday, geohash6: &str, grouping: &GeoGrouping) -> Result<Self> {
        Self::of(hour, weekday, &geohash6.parse()?, grouping)
    }

    pub fn of(hour: u8, weekday: Weekday, geohash6: &Geohash6, grouping: &GeoGrouping) -> Result<Self> {
        Ok(Self {
            hour: assign_hour_group(hour)?,
            week: assign_week_group(weekday),
            geo: grouping.assign_code(geohash6),
        })
    }
}

impl fmt::Display for GroupAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}/{:?}", self.hour, self.week, self.geo)
    }
}

/// Set of holiday dates; any date not in the set is a regular day.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            dates: dates.into_iter().collect(),
        }
    }

    pub fn is_holiday(&self, date: NaiveDate) -> u8 {
        u8::from(self.dates.contains(&date))
    }

    pub fn is_holiday_at(&self, ts: i64) -> u8 {
        DateTime::from_timestamp(ts, 0).map_or(0, |d| self.is_holiday(d.date_naive()))
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = &NaiveDate> {
        self.dates.iter()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse().map_err(|e| match e {
            Error::Data { location, message } => Error::Data {
                location: format!("{}:{location}", path.display()),
                message,
            },
            other => other,
        })
    }

    /// One ISO-8601 date per line; `#` starts a comment.
    pub fn to_file_string(&self) -> String {
        let mut s = String::from("# holidays, one ISO-8601 date per line\n");
        for d in &self.dates {
            s.push_str(&d.format("%Y-%m-%d").to_string());
            s.push('\n');
        }
        s
    }
}

impl FromStr for HolidayCalendar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in s.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|e| Error::data(format!("line {}", i + 1), format!("{line:?}: {e}")))?;
            dates.insert(d);
        }
        Ok(Self { dates })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hour_groups() {
        assert_eq!(assign_hour_group(12).unwrap(), HourGroup::Midday);
        assert_eq!(assign_hour_group(3).unwrap(), HourGroup::Morning);
        assert_eq!(assign_hour_group(10).unwrap(), HourGroup::Morning);
        assert_eq!(assign_hour_group(11).unwrap(), HourGroup::Midday);
        assert_eq!(assign_hour_group(16).unwrap(), HourGroup::Midday);
        assert_eq!(assign_hour_group(17).unwrap(), HourGroup::Night);
        assert_eq!(assign_hour_group(0).unwrap(), HourGroup::Night);
        assert_eq!(assign_hour_group(2).unwrap(), HourGroup::Night);
        assert!(assign_hour_group(24).is_err());
        let total: usize = HourGroup::ALL.iter().map(|g| g.hours().len()).sum();
        assert_eq!(total, 24);
    }

    #[test]
    fn week_groups() {
        assert_eq!(assign_week_group(Weekday::Tue), WeekGroup::Weekday);
        assert_eq!(assign_week_group(Weekday::Sat), WeekGroup::Weekend);
        assert_eq!(assign_week_group(Weekday::Sun), WeekGroup::Weekend);
        assert_eq!(assign_week_group(Weekday::Fri), WeekGroup::Weekday);
    }

    #[test]
    fn geo_groups() {
        assert_eq!(assign_geo_group("u4pruy").unwrap(), GeoGroup::NonW);
        assert!(assign_geo_group("w0abcd").is_err(), "'a' is not in the alphabet");
        assert_eq!(assign_geo_group("w0bcde").unwrap(), GeoGroup::W0j);
        assert_eq!(assign_geo_group("wjbcde").unwrap(), GeoGroup::W0j);
        assert_eq!(assign_geo_group("wkbcde").unwrap(), GeoGroup::Wkz);
        // 'm' lies in k–z.
        assert_eq!(assign_geo_group("wmpp2u").unwrap(), GeoGroup::Wkz);
        assert!(assign_geo_group("wmpp2").is_err());
        assert!(assign_geo_group("wmpp2!").is_err());
    }

    #[test]
    fn query_moment_example() {
        // Tuesday at 12:00 from "wmpp2u".
        let g = GroupAssignment::compute(12, Weekday::Tue, "wmpp2u", &GeoGrouping::default()).unwrap();
        assert_eq!(g.hour, HourGroup::Midday);
        assert_eq!(g.week, WeekGroup::Weekday);
        assert_eq!(g.geo, GeoGroup::Wkz);
    }

    #[test]
    fn geohash_vectors() {
        assert_eq!(geohash_encode(57.64911, 10.40744, 6).unwrap(), "u4pruy");
        assert_eq!(geohash_encode(57.64911, 10.40744, 11).unwrap(), "u4pruydqqvj");
        assert_eq!(geohash_encode(0.0, 0.0, 1).unwrap(), "s");
        assert_eq!(oracle_geohash6(57.64911, 10.40744), "u4pruy");
        assert!(geohash_encode(91.0, 0.0, 6).is_err());
        assert!(geohash_encode(0.0, 0.0, 13).is_err());
        let cell = geohash_decode("u4pruy").unwrap();
        assert!(cell.contains(57.64911, 10.40744));
    }

    #[test]
    fn weekday_from_timestamp() {
        assert_eq!(Weekday::from_timestamp(0), Weekday::Thu);
        // 2024-01-01T12:00:00Z was a Monday.
        assert_eq!(Weekday::from_timestamp(1_704_110_400), Weekday::Mon);
        assert_eq!(hour_of_day(1_704_110_400), 12);
        assert_eq!(Weekday::from_timestamp(-1), Weekday::Wed);
    }

    #[test]
    fn holiday_calendar() {
        let cal: HolidayCalendar = "# comment\n2024-10-01\n\n2024-10-02 # national day\n".parse().unwrap();
        assert_eq!(cal.len(), 2);
        assert_eq!(cal.is_holiday(NaiveDate::from_ymd_opt(2024, 10, 1).unwrap()), 1);
        assert_eq!(cal.is_holiday(NaiveDate::from_ymd_opt(2024, 10, 3).unwrap()), 0);
        let empty = HolidayCalendar::default();
        assert_eq!(empty.is_holiday(NaiveDate::from_ymd_opt(2024, 10, 1).unwrap()), 0);
        assert!("2024-13-01".parse::<HolidayCalendar>().is_err());
        let back: HolidayCalendar = cal.to_file_string().parse().unwrap();
        assert_eq!(back, cal);
        // 2024-10-01T08:00:00Z
        assert_eq!(cal.is_holiday_at(1_727_769_600), 1);
    }

    /// Independent oracle: quantize each axis to 15 bits and interleave them
    /// (longitude first), five bits per symbol.
    fn oracle_geohash6(lat: f64, lon: f64) -> String {
        let q = |v: f64, lo: f64, span: f64| -> u32 {
            (((v - lo) / span * 32768.0).floor() as i64).clamp(0, 32767) as u32
        };
        let (lat_q, lon_q) = (q(lat, -90.0, 180.0), q(lon, -180.0, 360.0));
        let mut bits = 0u64;
        for i in (0..15).rev() {
            bits = (bits << 1) | u64::from((lon_q >> i) & 1);
            bits = (bits << 1) | u64::from((lat_q >> i) & 1);
        }
        (0..6)
            .rev()
            .map(|s| GEOHASH_ALPHABET[((bits >> (5 * s)) & 31) as usize] as char)
            .collect()
    }

    fn oracle_contains(hash: &str, lat: f64, lon: f64) -> bool {
        geohash_decode(hash).unwrap().contains(lat, lon)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn encode_cell_contains_point(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0) {
            let h = geohash_encode(lat, lon, 6).unwrap();
            prop_assert_eq!(&h, &oracle_geohash6(lat, lon));
            prop_assert!(oracle_contains(&h, lat, lon));
            let (clat, clon) = geohash_decode(&h).unwrap().center();
            prop_assert_eq!(geohash_encode(clat, clon, 6).unwrap(), h);
        }
    }

    proptest! {
        #[test]
        fn grouping_is_total(hour in 0u8..24, day in 0u32..7, idx in prop::collection::vec(0usize..32, 6)) {
            let gh: String = idx.iter().map(|&i| GEOHASH_ALPHABET[i] as char).collect();
            let wd = Weekday::from_index(day).unwrap();
            let a = GroupAssignment::compute(hour, wd, &gh, &GeoGrouping::default()).unwrap();
            let b = GroupAssignment::compute(hour, wd, &gh, &GeoGrouping::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

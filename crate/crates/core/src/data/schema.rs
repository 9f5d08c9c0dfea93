use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Labels, Sample};
use crate::context::{Geohash6, Weekday};
use crate::error::{Error, Result};
use crate::gsu::BehaviorEvent;
use crate::moe::{RequestContext, TargetItem};

/// Column names of the tabular format. Behavior lists are cells holding
/// `list_delimiter`-separated values, all of the same length per row.
/// `timediff_list` holds seconds between each behavior and the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSchema {
    pub user_id: String,
    pub item_id: String,
    pub category_id: String,
    pub shop_id: String,
    pub request_time: String,
    pub request_hour: String,
    pub request_weekday: String,
    pub request_geohash: String,
    /// Optional; when the column is absent the holiday calendar decides.
    pub is_holiday: String,
    pub item_list: String,
    pub category_list: String,
    pub shop_list: String,
    pub timediff_list: String,
    pub hours_list: String,
    pub weekdays_list: String,
    pub geohash_list: String,
    /// Optional.
    pub price_list: String,
    pub click: String,
    /// Optional.
    pub conversion: String,
    pub list_delimiter: char,
    /// Columns accepted and skipped.
    pub ignored_columns: Vec<String>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        let s = |v: &str| v.to_string();
        Self {
            user_id: s("user_id"),
            item_id: s("item_id"),
            category_id: s("category_1_id"),
            shop_id: s("shop_id"),
            request_time: s("times"),
            request_hour: s("hours"),
            request_weekday: s("weekdays"),
            request_geohash: s("geohash12"),
            is_holiday: s("is_holiday"),
            item_list: s("item_id_list"),
            category_list: s("category_1_id_list"),
            shop_list: s("shop_id_list"),
            timediff_list: s("timediff_list"),
            hours_list: s("hours_list"),
            weekdays_list: s("weekdays_list"),
            geohash_list: s("shop_geohash6_list"),
            price_list: s("price_list"),
            click: s("click"),
            conversion: s("conversion"),
            list_delimiter: ';',
            ignored_columns: [
                "gender",
                "visit_city",
                "avg_price",
                "is_supervip",
                "ctr_30",
                "ord_30",
                "total_amt_30",
                "city_id",
                "district_id",
                "shop_aoi_id",
                "shop_geohash_6",
                "shop_geohash_12",
                "brand_id",
                "merge_standard_food_id",
                "rank_7",
                "rank_30",
                "rank_90",
                "merge_standard_food_id_list",
                "brand_id_list",
                "shop_aoi_id_list",
                "time_type_list",
                "time_type",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

/// Header positions of the columns a reader needs.
#[derive(Debug, Clone)]
pub(crate) struct ColumnIndex {
    idx: HashMap<String, usize>,
}

impl DatasetSchema {
    fn required(&self) -> [&str; 15] {
        [
            &self.user_id,
            &self.item_id,
            &self.category_id,
            &self.shop_id,
            &self.request_time,
            &self.request_hour,
            &self.request_weekday,
            &self.request_geohash,
            &self.item_list,
            &self.category_list,
            &self.shop_list,
            &self.timediff_list,
            &self.hours_list,
            &self.weekdays_list,
            &self.geohash_list,
        ]
        .map(String::as_str)
    }

    fn optional(&self) -> [&str; 4] {
        [&self.is_holiday, &self.price_list, &self.click, &self.conversion].map(String::as_str)
    }

    /// Header written by [`DatasetSchema::to_record`].
    pub fn header(&self) -> Vec<String> {
        self.required().iter().chain(self.optional().iter()).map(|s| s.to_string()).collect()
    }

    pub(crate) fn index(&self, header: &csv::StringRecord) -> Result<ColumnIndex> {
        let mut idx = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            let known = self.required().contains(&name)
                || self.optional().contains(&name)
                || self.ignored_columns.iter().any(|c| c == name);
            if !known {
                return Err(Error::data("header", format!("unknown column '{name}'")));
            }
            if idx.insert(name.to_string(), i).is_some() {
                return Err(Error::data("header", format!("duplicate column '{name}'")));
            }
        }
        for r in self.required() {
            if !idx.contains_key(r) {
                return Err(Error::data("header", format!("missing column '{r}'")));
            }
        }
        Ok(ColumnIndex { idx })
    }

    /// Parses one data row. `holiday` supplies the flag when the row has none.
    pub(crate) fn parse_record(
        &self,
        cols: &ColumnIndex,
        rec: &csv::StringRecord,
        holiday: &dyn Fn(i64) -> u8,
    ) -> std::result::Result<Sample, String> {
        let get = |name: &str| cols.idx.get(name).and_then(|&i| rec.get(i));
        let field = |name: &str| get(name).ok_or_else(|| format!("missing field '{name}'"));
        let int = |name: &str| -> std::result::Result<i64, String> {
            let v = field(name)?;
            v.trim().parse::<i64>().map_err(|_| format!("'{name}': '{v}' is not an integer"))
        };

        let ts = int(&self.request_time)?;
        let hour = parse_hour(int(&self.request_hour)?).map_err(|e| format!("'{}': {e}", self.request_hour))?;
        let weekday = parse_weekday(int(&self.request_weekday)?).map_err(|e| format!("'{}': {e}", self.request_weekday))?;
        let geohash6 = parse_geohash(field(&self.request_geohash)?).map_err(|e| format!("'{}': {e}", self.request_geohash))?;
        let is_holiday = match get(&self.is_holiday) {
            Some(v) if !v.trim().is_empty() => match v.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(format!("'{}': '{other}' is not 0/1", self.is_holiday)),
            },
            _ => holiday(ts),
        };
        let request = RequestContext {
            timestamp: ts,
            hour_of_day: hour,
            weekday,
            geohash6,
            is_holiday,
            target: TargetItem {
                item_id: int(&self.item_id)?,
                category_id: int(&self.category_id)?,
                shop_id: int(&self.shop_id)?,
            },
        };

        let list = |name: &str| -> std::result::Result<Vec<&str>, String> {
            let v = field(name)?.trim();
            Ok(if v.is_empty() {
                Vec::new()
            } else {
                v.split(self.list_delimiter).map(str::trim).collect()
            })
        };
        let ints = |name: &str| -> std::result::Result<Vec<i64>, String> {
            list(name)?
                .into_iter()
                .map(|v| v.parse::<i64>().map_err(|_| format!("'{name}': '{v}' is not an integer")))
                .collect()
        };
        let items = ints(&self.item_list)?;
        let n = items.len();
        let cats = ints(&self.category_list)?;
        let shops = ints(&self.shop_list)?;
        let diffs = ints(&self.timediff_list)?;
        let hours = ints(&self.hours_list)?;
        let days = ints(&self.weekdays_list)?;
        let geos = list(&self.geohash_list)?;
        for (name, len) in [
            (&self.category_list, cats.len()),
            (&self.shop_list, shops.len()),
            (&self.timediff_list, diffs.len()),
            (&self.hours_list, hours.len()),
            (&self.weekdays_list, days.len()),
            (&self.geohash_list, geos.len()),
        ] {
            if len != n {
                return Err(format!(
                    "list length mismatch: '{}' has {n} entries but '{name}' has {len}",
                    self.item_list
                ));
            }
        }
        let prices: Vec<Option<f64>> = match get(&self.price_list).map(str::trim) {
            None | Some("") => vec![None; n],
            Some(v) => {
                let parts: Vec<&str> = v.split(self.list_delimiter).map(str::trim).collect();
                if parts.len() != n {
                    return Err(format!(
                        "list length mismatch: '{}' has {n} entries but '{}' has {}",
                        self.item_list,
                        self.price_list,
                        parts.len()
                    ));
                }
                parts
                    .into_iter()
                    .map(|p| {
                        if p.is_empty() {
                            Ok(None)
                        } else {
                            p.parse::<f64>().map(Some).map_err(|_| format!("'{}': '{p}' is not a number", self.price_list))
                        }
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let mut history = Vec::with_capacity(n);
        for j in 0..n {
            if diffs[j] < 0 {
                return Err(format!("'{}': negative gap {}", self.timediff_list, diffs[j]));
            }
            history.push(BehaviorEvent {
                item_id: items[j],
                category_id: cats[j],
                shop_id: shops[j],
                timestamp: ts - diffs[j],
                hour_of_day: parse_hour(hours[j]).map_err(|e| format!("'{}'[{j}]: {e}", self.hours_list))?,
                weekday: parse_weekday(days[j]).map_err(|e| format!("'{}'[{j}]: {e}", self.weekdays_list))?,
                geohash6: parse_geohash(geos[j]).map_err(|e| format!("'{}'[{j}]: {e}", self.geohash_list))?,
                price: prices[j],
            });
        }
        history.sort_by_key(|e| e.timestamp);

        let flag = |name: &str| -> std::result::Result<u8, String> {
            match get(name).map(str::trim) {
                None | Some("") => Ok(0),
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                Some(o) => Err(format!("'{name}': '{o}' is not 0/1")),
            }
        };
        Ok(Sample {
            user_id: int(&self.user_id)?,
            request,
            history,
            labels: Labels {
                click: flag(&self.click)?,
                conversion: flag(&self.conversion)?,
            },
        })
    }

    /// One CSV record in [`DatasetSchema::header`] order.
    pub fn to_record(&self, s: &Sample) -> Vec<String> {
        let d = self.list_delimiter.to_string();
        let join = |f: &dyn Fn(&BehaviorEvent) -> String| s.history.iter().map(f).collect::<Vec<_>>().join(&d);
        let r = &s.request;
        let ts = r.timestamp;
        let prices = if s.history.iter().all(|e| e.price.is_none()) {
            String::new()
        } else {
            join(&|e| e.price.map(|p| p.to_string()).unwrap_or_default())
        };
        vec![
            s.user_id.to_string(),
            r.target.item_id.to_string(),
            r.target.category_id.to_string(),
            r.target.shop_id.to_string(),
            ts.to_string(),
            r.hour_of_day.to_string(),
            r.weekday.index().to_string(),
            r.geohash6.to_string(),
            join(&|e| e.item_id.to_string()),
            join(&|e| e.category_id.to_string()),
            join(&|e| e.shop_id.to_string()),
            join(&|e| (ts - e.timestamp).to_string()),
            join(&|e| e.hour_of_day.to_string()),
            join(&|e| e.weekday.index().to_string()),
            join(&|e| e.geohash6.to_string()),
            r.is_holiday.to_string(),
            prices,
            s.labels.click.to_string(),
            s.labels.conversion.to_string(),
        ]
    }
}

fn parse_hour(v: i64) -> std::result::Result<u8, String> {
    if (0..24).contains(&v) {
        Ok(v as u8)
    } else {
        Err(format!("hour {v} not in 0..=23"))
    }
}

/// Monday = 0 … Sunday = 6.
fn parse_weekday(v: i64) -> std::result::Result<Weekday, String> {
    if (0..7).contains(&v) {
        Ok(Weekday::ALL[v as usize])
    } else {
        Err(format!("weekday {v} not in 0..=6"))
    }
}

/// Accepts geohashes of six or more characters and keeps the first six.
fn parse_geohash(v: &str) -> std::result::Result<Geohash6, String> {
    let v = v.trim();
    if v.len() < 6 || !v.is_char_boundary(6) {
        return Err(format!("geohash '{v}' shorter than 6 characters"));
    }
    v[..6].parse::<Geohash6>().map_err(|e| e.to_string())
}

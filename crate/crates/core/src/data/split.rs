use super::Sample;

pub const DAY_SECONDS: i64 = 86_400;

/// Train gets requests at or before `boundary`; test gets the following day
/// `(boundary, boundary + 1 day]`. Later requests are dropped.
pub fn time_split(rows: Vec<Sample>, boundary: i64) -> (Vec<Sample>, Vec<Sample>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in rows {
        let ts = r.request.timestamp;
        if ts <= boundary {
            train.push(r);
        } else if ts <= boundary + DAY_SECONDS {
            test.push(r);
        }
    }
    (train, test)
}

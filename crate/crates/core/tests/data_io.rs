use stim::data::{
    design_positive_rate, load_dataset, load_split_dir, synthesize, write_csv, write_jsonl, DatasetSchema,
    LoadOptions, SyntheticSpec,
};
use stim::eval::auc;

fn small() -> SyntheticSpec {
    SyntheticSpec {
        users: 40,
        train_rows_per_user: 4,
        test_rows_per_user: 2,
        ..Default::default()
    }
}

#[test]
fn csv_and_jsonl_round_trip() {
    let data = synthesize(&small(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = LoadOptions {
        calendar: data.calendar.clone(),
        ..Default::default()
    };

    let csv_path = dir.path().join("rows.csv");
    write_csv(&csv_path, &data.train, &DatasetSchema::default()).unwrap();
    let (back, report) = load_dataset(&csv_path, &opts).unwrap();
    assert!(report.rejected.is_empty(), "{:?}", report.rejected);
    assert_eq!(back, data.train);

    let json_path = dir.path().join("rows.jsonl");
    write_jsonl(&json_path, &data.test).unwrap();
    let (back, report) = load_dataset(&json_path, &opts).unwrap();
    assert!(report.rejected.is_empty());
    assert_eq!(back, data.test);
}

#[test]
fn split_dir_picks_up_both_files() {
    let data = synthesize(&small(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(&dir.path().join("train.jsonl"), &data.train).unwrap();
    write_jsonl(&dir.path().join("test.jsonl"), &data.test).unwrap();
    let opts = LoadOptions {
        calendar: data.calendar.clone(),
        ..Default::default()
    };
    let (train, test, reports) = load_split_dir(dir.path(), &opts).unwrap();
    assert_eq!((train.len(), test.len()), (data.train.len(), data.test.len()));
    assert_eq!(reports.len(), 2);
    assert!(train.iter().all(|s| s.request.timestamp < data.boundary));
    assert!(test.iter().all(|s| s.request.timestamp >= data.boundary));
}

#[test]
fn positive_rate_matches_design() {
    let spec = SyntheticSpec {
        users: 5000,
        train_rows_per_user: 20,
        test_rows_per_user: 0,
        history_min: 1,
        history_max: 4,
        label_noise: 0.05,
        ..Default::default()
    };
    let data = synthesize(&spec, 17).unwrap();
    assert_eq!(data.train.len(), 100_000);
    let rate = data.train.iter().filter(|s| s.labels.click == 1).count() as f64 / data.train.len() as f64;
    let design = design_positive_rate(&spec);
    assert!((rate - design).abs() <= 0.02, "rate {rate} vs design {design}");
}

#[test]
fn planted_rule_is_bayes_optimal_without_noise() {
    let spec = SyntheticSpec {
        users: 200,
        p_signal: 1.0,
        label_noise: 0.0,
        ..Default::default()
    };
    let data = synthesize(&spec, 5).unwrap();
    assert_eq!(data.profiles.len(), spec.users);
    let rows: Vec<_> = data.train.iter().chain(&data.test).collect();
    let scores: Vec<f64> = rows
        .iter()
        .map(|s| {
            let p = &data.profiles[(s.user_id - 1) as usize];
            assert_eq!(p.user_id, s.user_id);
            if p.matches(s) { 1.0 } else { 0.0 }
        })
        .collect();
    let labels: Vec<u8> = rows.iter().map(|s| s.labels.click).collect();
    assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
}

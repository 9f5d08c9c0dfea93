//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stim::context::{assign_geo_group, assign_hour_group, assign_week_group, hour_of_day, Weekday};
use stim::data::{load_split_dir, synthesize, LoadOptions, Sample, SyntheticSpec};
use stim::eval::{auc, evaluate, fit, gauc, TrainConfig};
use stim::forgetting::{
    build_masks, find_review_points, retention_trajectory, review_retention_schedule, CurveFamily,
    CurveParams, MaskConfig, MaskStrategy, Material, MaterialCurves, ReviewSchedule, ReviewValues, TimeAxis,
};
use stim::gsu::{gsu_search, BehaviorEvent, CompressedSequence};
use stim::model::{Arch, ModelConfig, StimModel, Task, VocabSizes};
use stim::moe::{ContextSlices, MoEConfig, QueryMoE, RequestContext, TargetItem};
use stim::numeric::param::zero_grads;
use stim::numeric::{grad_check, GradCheckConfig, Module, Optimizer, OptimizerConfig};

const BIN: &str = env!("CARGO_BIN_EXE_stim");
const DAY0: i64 = 1_704_067_200;

/// Criteria are timed, so they run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] criterion {id} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn event(ts: i64, category: i64, geo: &str) -> BehaviorEvent {
    BehaviorEvent {
        item_id: category * 10 + 1,
        category_id: category,
        shop_id: 3,
        timestamp: ts,
        hour_of_day: hour_of_day(ts),
        weekday: Weekday::from_timestamp(ts),
        geohash6: geo.parse().unwrap(),
        price: None,
    }
}

fn request(ts: i64, category: i64, geo: &str) -> RequestContext {
    RequestContext {
        timestamp: ts,
        hour_of_day: hour_of_day(ts),
        weekday: Weekday::from_timestamp(ts),
        geohash6: geo.parse().unwrap(),
        is_holiday: 0,
        target: TargetItem {
            item_id: category * 10 + 1,
            category_id: category,
            shop_id: 3,
        },
    }
}

const GEOS: [&str; 4] = ["wtw3sj", "wx4g0b", "u09tvw", "w4rqnp"];

#[test]
fn criterion_1_gradient_integrity() {
    let _guard = serial();
    let start = Instant::now();
    let data: Vec<Sample> = synthesize(
        &SyntheticSpec {
            users: 4,
            train_rows_per_user: 1,
            test_rows_per_user: 1,
            ..Default::default()
        },
        2,
    )
    .unwrap()
    .train;
    assert_eq!(data.len(), 4);
    let base = ModelConfig {
        k: 16,
        task: Task::Both,
        head_widths: vec![16, 8],
        vocab: VocabSizes {
            item: 128,
            category: 32,
            shop: 64,
        },
        ..Default::default()
    };
    assert_eq!(base.hmin.heads, 2);
    // Pick a parameter draw whose projected queries are not near zero norm
    // and which sits off the zero-bias ReLU kinks.
    let mut chosen = None;
    for seed in 0..200u64 {
        let mut m = StimModel::new(ModelConfig { seed, ..base.clone() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.visit_mut("", &mut |_, p| {
            for v in p.value.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        });
        let prepared: Vec<_> = data.iter().map(|s| m.prepare(s).unwrap()).collect();
        let min_norm = data
            .iter()
            .zip(&prepared)
            .flat_map(|(s, p)| m.query_norms(s, p).unwrap())
            .fold(f64::INFINITY, f64::min);
        if min_norm > 0.05 {
            chosen = Some((seed, m, prepared));
            break;
        }
    }
    let (seed, mut m, prepared) = chosen.expect("a well-conditioned draw");
    let report = grad_check(
        &mut m,
        |m, with_grad| {
            zero_grads(m);
            let mut total = 0.0;
            for (s, p) in data.iter().zip(&prepared) {
                total += m.loss_and_grad(s, p, 0.25, with_grad).unwrap().0 * 0.25;
            }
            total
        },
        &GradCheckConfig {
            eps: 1e-4,
            skip_zero_params: true,
            five_point: true,
            kink_tolerance: Some(1e-4),
            ..Default::default()
        },
    );
    let elapsed = start.elapsed();
    let worst = report.worst().unwrap();
    let checked = report.entries_checked();
    let pass = report.passes(1e-5) && elapsed < Duration::from_secs(60) && report.kinks() * 100 < checked;
    verdict(
        1,
        "gradient integrity",
        pass,
        format!(
            "max rel error {:.2e} at {} over {checked} entries ({} at ReLU kinks set aside), seed {seed}, {:.1?}",
            report.max_rel_error(),
            worst.path,
            report.kinks(),
            elapsed
        ),
    );
}

fn random_params(rng: &mut ChaCha8Rng) -> CurveParams {
    let r_init = rng.random_range(0.05..1.0);
    CurveParams {
        family: CurveFamily::ALL[rng.random_range(0..3)],
        s: rng.random_range(2.0..60.0),
        interval: rng.random_range(0.01..4.0),
        r_init,
        r_final: rng.random_range(r_init..=1.0),
        power_k: rng.random_range(0.01..1.0),
        power_m: rng.random_range(-3.0..-0.1),
        log_a: rng.random_range(0.5..1.0),
        log_b: rng.random_range(0.01..0.5),
        log_c: rng.random_range(0.5..3.0),
    }
}

#[test]
fn criterion_2_forgetting_invariants() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let p = random_params(&mut rng);
        let k = rng.random_range(1..40usize);
        let n_valid = rng.random_range(0..=k);
        // strictly increasing curve time going back from the most recent slot
        let mut t = vec![None; k];
        let mut acc = 0.0;
        for j in (0..n_valid).rev() {
            t[j] = Some(acc);
            acc += rng.random_range(0.05..2.0);
        }
        let axis = TimeAxis { gaps: t.clone(), t };
        let mut positions: Vec<usize> = (0..n_valid).filter(|_| rng.random_bool(0.3)).collect();
        positions.reverse();
        let sched = ReviewSchedule {
            material: Material::Hour,
            positions: positions.clone(),
        };
        let traj = retention_trajectory(&axis, &sched, &p, ReviewValues::Decreasing).unwrap();
        let rd = review_retention_schedule(&p, positions.len());
        let mut bad = |m: String| failures.push(format!("case {case}: {m}"));
        for (i, &pos) in positions.iter().enumerate() {
            if traj[pos] != rd[i].0 {
                bad(format!("retention at review {i} is {} not {}", traj[pos], rd[i].0));
            }
            if i > 0 && rd[i].0 > rd[i - 1].0 {
                bad("review peaks increase".into());
            }
            if i > 0 && !(rd[i].1 > rd[i - 1].1) {
                bad("D_i not strictly increasing".into());
            }
            // strict decay from this review to the next older one
            let stop = positions.get(i + 1).map_or(0, |&q| q + 1);
            for j in (stop..pos).rev() {
                if !(traj[j] < traj[j + 1]) {
                    bad(format!("no strict decay at slot {j}"));
                }
            }
        }
        if traj.iter().any(|v| !(0.0..=1.0).contains(v)) || traj[n_valid..].iter().any(|&v| v != 0.0) {
            bad("trajectory outside [0,1] or padding not zero".into());
        }
        // masks over a real sequence
        let mut events = Vec::new();
        let mut ts = DAY0 - 20 * 86_400;
        for _ in 0..n_valid {
            ts += rng.random_range(600..90_000);
            events.push(event(ts, 1, GEOS[rng.random_range(0..4)]));
        }
        let seq = CompressedSequence::from_events(&events, k);
        let req = request(ts + rng.random_range(60..90_000), 1, GEOS[rng.random_range(0..4)]);
        let cfg = MaskConfig {
            curves: MaterialCurves::uniform(p.clone()),
            ..Default::default()
        };
        for strategy in [MaskStrategy::Reviewed, MaskStrategy::IdenticalReviews, MaskStrategy::DecayOnly] {
            let m = build_masks(&seq, &req, &cfg, strategy).unwrap();
            for mat in Material::ALL {
                let v = m.get(mat);
                if v.iter().any(|x| !(0.0..=1.0).contains(x)) || v[n_valid..].iter().any(|&x| x != 0.0) {
                    bad(format!("{strategy:?} {mat:?} mask outside [0,1] or padding not zero"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(10);
    verdict(
        2,
        "forgetting-curve invariants",
        pass,
        format!("1000 instances, {} violations {:?}, {:.1?}", failures.len(), failures.first(), elapsed),
    );
}

fn pair_auc(s: &[f64], y: &[u8]) -> Option<f64> {
    let (mut hits, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    hits += 1.0;
                } else if s[i] == s[j] {
                    hits += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| hits / pairs)
}

#[test]
fn criterion_3_oracle_equivalence() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut metric_bad = 0;
    let mut metric_cases = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=50);
        let coarse = rng.random_bool(0.5);
        let s: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..5) as f64
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_bool(0.4) as u8).collect();
        let g: Vec<i64> = (0..n).map(|_| rng.random_range(0..4)).collect();
        metric_cases += 1;
        match (auc(&s, &y).ok(), pair_auc(&s, &y)) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
            (None, None) => {}
            _ => metric_bad += 1,
        }
        let (mut num, mut den) = (0.0, 0.0);
        for grp in 0..4 {
            let idx: Vec<usize> = (0..n).filter(|&i| g[i] == grp).collect();
            let gs: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let gy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            if let Some(a) = pair_auc(&gs, &gy) {
                num += idx.len() as f64 * a;
                den += idx.len() as f64;
            }
        }
        match gauc(&s, &y, &g, None) {
            Ok(v) if den > 0.0 && (v - num / den).abs() <= 1e-12 => {}
            Err(_) if den == 0.0 => {}
            _ => metric_bad += 1,
        }
    }

    let grouping = Default::default();
    let mut scan_bad = 0;
    for _ in 0..1000 {
        let len = rng.random_range(0..60);
        let mut ts = DAY0 - 30 * 86_400;
        let history: Vec<BehaviorEvent> = (0..len)
            .map(|_| {
                ts += rng.random_range(1..200_000);
                event(ts, rng.random_range(1..5), GEOS[rng.random_range(0..4)])
            })
            .collect();
        let target = rng.random_range(1..5);
        let k = rng.random_range(1..30);
        let seq = gsu_search(&history, target, k);
        // brute force: newest-to-oldest scan keeping matches, then restore order
        let mut kept = Vec::new();
        for e in history.iter().rev() {
            if e.category_id == target && kept.len() < k {
                kept.push(*e);
            }
        }
        kept.reverse();
        let got: Vec<BehaviorEvent> = seq.events().copied().collect();
        if got != kept || seq.k() != k || seq.valid_len() != kept.len() {
            scan_bad += 1;
        }
        let req = request(ts + rng.random_range(60..200_000), target, GEOS[rng.random_range(0..4)]);
        for mat in Material::ALL {
            let found = find_review_points(&seq, &req, mat, &grouping).unwrap();
            let mut brute = Vec::new();
            for j in (0..kept.len()).rev() {
                let e = &kept[j];
                let same = match mat {
                    Material::Hour => {
                        assign_hour_group(e.hour_of_day).unwrap() == assign_hour_group(req.hour_of_day).unwrap()
                    }
                    Material::Week => assign_week_group(e.weekday) == assign_week_group(req.weekday),
                    Material::Geo => {
                        assign_geo_group(e.geohash6.as_str()).unwrap() == assign_geo_group(req.geohash6.as_str()).unwrap()
                    }
                };
                if same {
                    brute.push(j);
                }
            }
            if found.positions != brute {
                scan_bad += 1;
            }
        }
    }
    verdict(
        3,
        "oracle equivalence",
        metric_bad == 0 && scan_bad == 0,
        format!("{metric_cases} auc/gauc instances with {metric_bad} mismatches; 1000 gsu/review instances with {scan_bad} mismatches"),
    );
}

#[test]
fn criterion_4_holiday_identity() {
    let _guard = serial();
    let e = 8;
    let slices = ContextSlices {
        hour: e,
        week: e,
        loc: e,
        item: 3 * e,
    };
    let cfg = MoEConfig::default();
    let alpha = cfg.alpha_holiday;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let moe = QueryMoE::new(cfg.clone(), slices, seed).unwrap();
        let x: Vec<f64> = (0..slices.total()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let off = moe.forward(&x, false, true).unwrap();
        let on = moe.forward(&x, true, true).unwrap();
        let h_week = &off.h[1];
        for d in 0..cfg.d_q {
            let diff = on.bundle.queries[0][d] - off.bundle.queries[0][d];
            worst = worst.max((diff - alpha * h_week[d]).abs());
        }
    }
    verdict(
        4,
        "holiday identity",
        worst <= 1e-9,
        format!("max |ΔQ1 − α·h_week| = {worst:.2e} over 50 parameter draws (α = {alpha})"),
    );
}

#[test]
fn criterion_5_overfit_sanity() {
    let _guard = serial();
    let start = Instant::now();
    let data = synthesize(
        &SyntheticSpec {
            users: 32,
            train_rows_per_user: 1,
            test_rows_per_user: 1,
            ..Default::default()
        },
        5,
    )
    .unwrap();
    let batch_rows = data.train;
    assert_eq!(batch_rows.len(), 32);
    let mut m = StimModel::new(ModelConfig::default()).unwrap();
    let prepared: Vec<_> = batch_rows.iter().map(|s| m.prepare(s).unwrap()).collect();
    let batch: Vec<_> = batch_rows.iter().zip(&prepared).collect();
    let mut opt = Optimizer::new(OptimizerConfig {
        lr: 1e-2,
        ..Default::default()
    });
    let mut losses = Vec::new();
    let mut reached = None;
    for step in 1..=2000 {
        let l = m.train_step(&batch, &mut opt).unwrap();
        losses.push(l);
        if l < 0.05 {
            reached = Some(step);
            break;
        }
    }
    let elapsed = start.elapsed();
    let pass = reached.is_some() && elapsed < Duration::from_secs(120);
    verdict(
        5,
        "overfit sanity",
        pass,
        format!(
            "BCE {:.4} -> {:.4}, below 0.05 at step {:?}, {:.1?}",
            losses[0],
            losses.last().unwrap(),
            reached,
            elapsed
        ),
    );
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_6_synthetic_lift() {
    let _guard = serial();
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    assert_eq!(spec.p_signal, 0.9);
    let data = synthesize(&spec, 1).unwrap();
    assert!(data.train.len() >= 50_000 && data.test.len() >= 10_000);
    let tc = TrainConfig {
        epochs: 5,
        ..Default::default()
    };
    let run = |cfg: ModelConfig, seed: u64| {
        let mut m = StimModel::new(ModelConfig { seed, ..cfg }).unwrap();
        fit(
            &mut m,
            &data.train,
            &TrainConfig {
                shuffle_seed: seed,
                ..tc.clone()
            },
        )
        .unwrap();
        evaluate(&m, &data.test, "test").unwrap().primary_auc().unwrap()
    };
    let seeds = [1u64, 2, 3, 4, 5];
    let (mut full, mut n1, mut base) = (Vec::new(), Vec::new(), Vec::new());
    for &seed in &seeds {
        full.push(run(ModelConfig::default(), seed));
        n1.push(run(ModelConfig::default().with_ablations(&["N1"]), seed));
        base.push(run(
            ModelConfig {
                arch: Arch::GsuBaseline,
                ..Default::default()
            },
            seed,
        ));
        println!(
            "  seed {seed}: N4/M4 {:.4}  N1 {:.4}  GSU-only {:.4}",
            full.last().unwrap(),
            n1.last().unwrap(),
            base.last().unwrap()
        );
    }
    let margin = mean(&full) - mean(&base);
    let wins = full.iter().zip(&n1).filter(|(a, b)| a >= b).count();
    let elapsed = start.elapsed();
    let pass = margin >= 0.05 && wins >= 4 && elapsed < Duration::from_secs(30 * 60);
    verdict(
        6,
        "synthetic lift",
        pass,
        format!(
            "mean AUC full {:.4} vs GSU-only {:.4} (margin {margin:.4}); N4 >= N1 in {wins}/5 seeds; {} train / {} test rows; {:.1?}",
            mean(&full),
            mean(&base),
            data.train.len(),
            data.test.len(),
            elapsed
        ),
    );
}

fn stim(args: &[&str]) -> std::process::Output {
    let out = Command::new(BIN).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

#[test]
fn criterion_7_curve_family_harness() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ablate.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"k": 16}, "train": {"epochs": 2}, "seeds": [1], "synthetic": {"users": 200}, "data_seed": 7}"#,
    )
    .unwrap();
    let outs: Vec<_> = ["a.csv", "b.csv"].iter().map(|n| dir.path().join(n)).collect();
    for o in &outs {
        let r = stim(&[
            "ablate",
            "--config",
            cfg.to_str().unwrap(),
            "--family",
            "curve",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(r.status.success());
    }
    let a = std::fs::read_to_string(&outs[0]).unwrap();
    let b = std::fs::read_to_string(&outs[1]).unwrap();
    let mut reader = csv::Reader::from_reader(a.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    let mut ranked: Vec<(String, f64)> = rows
        .iter()
        .map(|r| (r[0].to_string(), r[4].parse::<f64>().unwrap_or(f64::NAN)))
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    let pass = rows.len() == 3 && names == ["exponential", "power", "logarithmic"] && a == b;
    verdict(
        7,
        "curve-family harness",
        pass,
        format!(
            "{} rows {names:?}, identical reruns: {}; AUC ranking (reported only) {ranked:?}",
            rows.len(),
            a == b
        ),
    );
}

#[test]
fn criterion_8_review_trajectory() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    // Request on a Wednesday at 20:00; three earlier Night-group events
    // (slots 2, 4, 7) among five Midday-group ones, all in the target category.
    let req_ts = DAY0 + 2 * 86_400 + 20 * 3600;
    let hours = [(-6, 13), (-5, 21), (-5, 14), (-4, 12), (-3, 22), (-2, 15), (-1, 23), (-1, 12)];
    let mut history = Vec::new();
    for (day, hour) in hours {
        let mut e = event(req_ts - (req_ts % 86_400) + day * 86_400 + hour * 3600, 2, "u09tvw");
        // keep weekday and geo constant so only the hour material varies
        e.weekday = Weekday::Wed;
        history.push(e);
    }
    let mut req = request(req_ts, 2, "u09tvw");
    req.weekday = Weekday::Wed;
    let fixture = serde_json::json!({ "request": req, "history": history });
    let req_path = dir.path().join("request.json");
    std::fs::write(&req_path, fixture.to_string()).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"k": 8, "masks": {"curves": {"hour": {"s": 5.0, "r_init": 0.2, "r_final": 0.9}}}}}"#,
    )
    .unwrap();
    let out = dir.path().join("traj.csv");
    let r = stim(&[
        "mask-dump",
        "--config",
        cfg.to_str().unwrap(),
        "--request",
        req_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let mut hour = Vec::new();
    let mut reviews = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        if &rec[3] == "hour" {
            let pos: usize = rec[0].parse().unwrap();
            hour.push((pos, rec[4].parse::<f64>().unwrap()));
            if &rec[5] == "1" {
                reviews.push(pos);
            }
        }
    }
    hour.sort_by_key(|h| h.0);
    let v: Vec<f64> = hour.iter().map(|h| h.1).collect();
    let maxima: Vec<usize> = (0..v.len())
        .filter(|&j| {
            let left = j == 0 || v[j] > v[j - 1];
            let right = j + 1 == v.len() || v[j] > v[j + 1];
            left && right
        })
        .collect();
    let expected = vec![2usize, 4, 7];
    let peaks: Vec<f64> = expected.iter().rev().map(|&j| v[j]).collect();
    let decreasing = peaks.windows(2).all(|w| w[1] < w[0]);
    let pass = maxima == expected && reviews == expected && decreasing;
    verdict(
        8,
        "review-point trajectory",
        pass,
        format!("local maxima at {maxima:?}, review slots {reviews:?}, peaks newest-first {peaks:?}"),
    );
}

#[test]
fn criterion_9_cold_start_protocol() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"users": 300, "cold_start_fraction": 0.2}"#).unwrap();
    assert!(stim(&["gen-synth", "--spec", spec.to_str().unwrap(), "--seed", "9", "--out", d.to_str().unwrap()])
        .status
        .success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model": {"k": 16}, "train": {"epochs": 1}}"#).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    assert!(stim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        d.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap()
    ])
    .status
    .success());
    let r = stim(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", d.to_str().unwrap(), "--cold-start"]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    let reports: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (_, test, _) = load_split_dir(Path::new(&d), &LoadOptions::default()).unwrap();
    let brute = test.iter().filter(|s| s.history.len() < 10).count();
    let slice = &reports[1];
    let pass = reports.len() == 2
        && slice["slice"].as_str().unwrap().starts_with("cold_start")
        && slice["rows"].as_u64() == Some(brute as u64)
        && reports[0]["rows"].as_u64() == Some(test.len() as u64)
        && brute > 0;
    verdict(
        9,
        "cold-start protocol",
        pass,
        format!(
            "separate report '{}' with {} rows; brute-force count {brute} of {} test rows",
            slice["slice"], slice["rows"], test.len()
        ),
    );
}

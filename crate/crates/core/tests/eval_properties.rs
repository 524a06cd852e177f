use proptest::prelude::*;
use wsn_forecast::data::{generate_ball, default_ball_configs, DatasetDescriptor, Family};
use wsn_forecast::dps::run_dps;
use wsn_forecast::eval::{
    calibrate_resolution, compare_to_baseline, emit_report, equal_pair_fraction, mape, read_csv_report,
    read_json_report, run_grid, run_scenario, Scenario,
};
use wsn_forecast::forecast::FitConfig;
use wsn_forecast::series::{split_origins, TimeSeries};

fn all_methods() -> Vec<FitConfig> {
    vec![
        FitConfig::constant(),
        FitConfig::linear(),
        FitConfig::simple_mean(),
        FitConfig::es(),
        FitConfig::arima(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mape_is_scale_invariant(
        pairs in prop::collection::vec((1.0f64..100.0, -50.0f64..50.0), 1..40),
        c in prop_oneof![-1000.0f64..-0.001, 0.001f64..1000.0],
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (m1, _) = mape(&a, &p).unwrap();
        let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
        let cp: Vec<f64> = p.iter().map(|x| c * x).collect();
        let (m2, _) = mape(&ca, &cp).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
    }

    #[test]
    fn calibrated_resolution_meets_target(
        xs in prop::collection::vec(-20.0f64..20.0, 3..80),
        target in 0.05f64..0.95,
    ) {
        let s = TimeSeries::from_values(xs.clone(), "u", 0.01).unwrap();
        match calibrate_resolution(&s, target) {
            Ok(r) => prop_assert!(equal_pair_fraction(&xs, r) >= target),
            Err(_) => prop_assert!(xs.windows(2).all(|w| w[0] == w[1])),
        }
    }

    #[test]
    fn comparison_is_reflexive(mapes in prop::collection::vec(0.0f64..100.0, 2..50)) {
        let s = TimeSeries::from_values((0..200).map(|i| (i as f64 * 0.3).sin() + 3.0).collect(), "°C", 0.01).unwrap();
        let sc = Scenario {
            descriptor: DatasetDescriptor::builtin(Family::Intel, 1).unwrap(),
            method: FitConfig::linear(),
            history: 10,
            window: 5,
            n_splits: mapes.len(),
            seed: mapes.len() as u64,
        };
        let r = run_scenario(&sc, &s).unwrap();
        prop_assert!(!compare_to_baseline(&r.splits, &r.splits).unwrap().significant);
    }
}

#[test]
fn avoided_counts_match_dps_on_one_window() {
    let ball = generate_ball(&default_ball_configs()[0]).unwrap();
    let desc = DatasetDescriptor::builtin(Family::Ball, 1).unwrap();
    for (h, w) in [(20, 10), (50, 20), (100, 50)] {
        for origin in [0, 300, 1000] {
            let slice = TimeSeries::from_values(ball.values()[origin..origin + h + w].to_vec(), "meter", 0.001).unwrap();
            for cfg in all_methods() {
                let sc = Scenario {
                    descriptor: desc,
                    method: cfg.clone(),
                    history: h,
                    window: w,
                    n_splits: 1,
                    seed: 0,
                };
                let eval = run_scenario(&sc, &slice).unwrap();
                let trace = run_dps(&slice, &cfg, h, w, desc.delta_min).unwrap();
                assert_eq!(
                    trace.per_window_tx,
                    vec![w - eval.splits[0].avoided],
                    "{} H={h} W={w} origin={origin}",
                    cfg.method
                );
            }
        }
    }
}

#[test]
fn constant_mape_matches_replay_oracle() {
    let ball = generate_ball(&default_ball_configs()[0]).unwrap();
    let desc = DatasetDescriptor::builtin(Family::Ball, 1).unwrap();
    let sc = Scenario {
        descriptor: desc,
        method: FitConfig::constant(),
        history: 100,
        window: 10,
        n_splits: 200,
        seed: 42,
    };
    let got = run_scenario(&sc, &ball).unwrap();

    let xs = ball.values();
    let origins = split_origins(xs.len(), 100, 10, 200, 42).unwrap();
    let mut per_split = Vec::new();
    for &o in &origins {
        let last = xs[o + 99];
        let (mut sum, mut used) = (0.0, 0);
        for &a in &xs[o + 100..o + 110] {
            if a.abs() > 1e-12 {
                sum += ((a - last) / a).abs() * 100.0;
                used += 1;
            }
        }
        per_split.push(sum / used as f64);
    }
    let oracle = per_split.iter().sum::<f64>() / per_split.len() as f64;
    assert!((got.row.mape_mean.unwrap() - oracle).abs() <= 1e-9 * oracle);
    assert_eq!(got.splits.iter().map(|s| s.origin).collect::<Vec<_>>(), origins);
}

#[test]
fn dps_constant_savings_match_direct_scan() {
    let ball = generate_ball(&default_ball_configs()[0]).unwrap();
    let xs = ball.values();
    let trace = run_dps(&ball, &FitConfig::constant(), 50, 20, 0.001).unwrap();
    let mut last = xs[49];
    let mut quiet = 0;
    for &x in &xs[50..] {
        if (x - last).abs() < 0.001 {
            quiet += 1;
        } else {
            last = x;
        }
    }
    let expect = 100.0 * quiet as f64 / (xs.len() - 50) as f64;
    assert_eq!(trace.saved_fraction, expect);
}

#[test]
fn reports_round_trip_and_are_stable() {
    let s = TimeSeries::from_values((0..400).map(|i| 20.0 + (i as f64 * 0.05).sin()).collect(), "°C", 0.01).unwrap();
    let desc = DatasetDescriptor::builtin(Family::Intel, 2).unwrap();
    let rows: Vec<_> = run_grid(&s, &desc, &all_methods(), &[20, 50], &[1, 10], 30, 9)
        .unwrap()
        .into_iter()
        .map(|r| r.row)
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = emit_report(&rows, dir.path(), "a", "abc123").unwrap();
    assert_eq!(read_json_report(&json).unwrap(), rows);
    assert_eq!(read_csv_report(&csv).unwrap(), rows);

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert_eq!(
        text.lines().next().unwrap(),
        "family,group,method,H,W,mape_mean,mape_std,ci95,avoided_mean,saved_pct,model_updates,fairness,skipped_terms,manifest_hash"
    );

    let again: Vec<_> = run_grid(&s, &desc, &all_methods(), &[20, 50], &[1, 10], 30, 9)
        .unwrap()
        .into_iter()
        .map(|r| r.row)
        .collect();
    let (_, csv2) = emit_report(&again, dir.path(), "b", "abc123").unwrap();
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
}

#[test]
fn single_row_report_shape() {
    let s = TimeSeries::from_values(vec![1.0; 50], "°C", 0.01).unwrap();
    let desc = DatasetDescriptor::builtin(Family::Intel, 1).unwrap();
    let rows: Vec<_> = run_grid(&s, &desc, &[FitConfig::constant()], &[10], &[5], 5, 0)
        .unwrap()
        .into_iter()
        .map(|r| r.row)
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (json, csv) = emit_report(&rows, dir.path(), "one", "h").unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 2);
    assert!(emit_report(&[], dir.path(), "none", "h").is_err());
}

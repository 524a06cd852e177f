use proptest::prelude::*;
use wsn_forecast::dps::{run_dps, DpsMessage};
use wsn_forecast::forecast::FitConfig;
use wsn_forecast::series::TimeSeries;

fn series(xs: Vec<f64>) -> TimeSeries {
    TimeSeries::from_values(xs, "m", 0.001).unwrap()
}

fn configs() -> Vec<FitConfig> {
    vec![
        FitConfig::constant(),
        FitConfig::linear(),
        FitConfig::simple_mean(),
        FitConfig::es(),
        FitConfig::arima(),
    ]
}

/// Classic send-on-delta: transmit whenever the value moved at least `delta`
/// away from the last transmitted one. The first `h` values always go out.
fn send_on_delta(xs: &[f64], h: usize, delta: f64) -> Vec<bool> {
    let mut last = f64::NAN;
    xs.iter()
        .enumerate()
        .map(|(t, &x)| {
            let tx = t < h || (x - last).abs() >= delta;
            if tx {
                last = x;
            }
            tx
        })
        .collect()
}

fn walk() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, 40..120), -5.0f64..5.0).prop_map(|(steps, start)| {
        steps
            .into_iter()
            .scan(start, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction_stays_within_threshold(
        xs in walk(),
        method in 0usize..5,
        h in 16usize..30,
        w in 1usize..12,
        delta in 0.01f64..2.0,
    ) {
        let cfg = &configs()[method];
        let trace = run_dps(&series(xs.clone()), cfg, h, w, delta).unwrap();
        for (t, (&r, &x)) in trace.reconstructed.values().iter().zip(&xs).enumerate() {
            if trace.transmitted[t] {
                prop_assert_eq!(r, x);
            } else {
                prop_assert!((r - x).abs() < delta);
            }
        }
        prop_assert!(trace.max_abs_error(&xs) < delta);
    }

    #[test]
    fn sensor_and_gateway_forecasts_agree(
        xs in walk(),
        method in 0usize..5,
        w in 1usize..12,
        delta in 0.01f64..2.0,
    ) {
        let trace = run_dps(&series(xs), &configs()[method], 20, w, delta).unwrap();
        for (s, g) in trace.sensor_forecasts.iter().zip(&trace.gateway_forecasts) {
            prop_assert_eq!(s.map(f64::to_bits), g.map(f64::to_bits));
        }
        for (t, fc) in trace.gateway_forecasts.iter().enumerate() {
            if !trace.transmitted[t] {
                prop_assert_eq!(Some(trace.reconstructed.values()[t]), *fc);
            }
        }
    }

    #[test]
    fn messages_are_conserved(
        xs in walk(),
        method in 0usize..5,
        w in 1usize..12,
        delta in 0.01f64..2.0,
    ) {
        let n = xs.len();
        let trace = run_dps(&series(xs), &configs()[method], 20, w, delta).unwrap();
        let measurements = trace.messages.iter().filter(|m| m.is_measurement()).count();
        let silent = trace.transmitted.iter().filter(|t| !**t).count();
        prop_assert_eq!(measurements + silent, n);
        prop_assert_eq!(trace.per_window_tx.iter().sum::<usize>(), trace.post_bootstrap_measurements());
        let indices: Vec<usize> = trace.messages.iter().filter_map(|m| match m {
            DpsMessage::Measurement { index, .. } => Some(*index as usize),
            _ => None,
        }).collect();
        let expect: Vec<usize> = (0..n).filter(|t| trace.transmitted[*t]).collect();
        prop_assert_eq!(indices, expect);
    }

    #[test]
    fn constant_matches_send_on_delta(
        xs in walk(),
        h in 1usize..20,
        w in 1usize..15,
        delta in 0.01f64..2.0,
    ) {
        let trace = run_dps(&series(xs.clone()), &FitConfig::constant(), h, w, delta).unwrap();
        prop_assert_eq!(trace.transmitted, send_on_delta(&xs, h, delta));
    }

    #[test]
    fn constant_savings_monotone_on_rising_series(
        steps in prop::collection::vec(0.0f64..1.0, 30..100),
        d1 in 0.01f64..2.0,
        d2 in 0.01f64..2.0,
    ) {
        let xs: Vec<f64> = steps.iter().scan(0.0, |a, s| { *a += s; Some(*a) }).collect();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let s = series(xs);
        let a = run_dps(&s, &FitConfig::constant(), 5, 5, lo).unwrap();
        let b = run_dps(&s, &FitConfig::constant(), 5, 5, hi).unwrap();
        prop_assert!(b.saved_fraction >= a.saved_fraction);
    }

    #[test]
    fn non_constant_savings_monotone_in_delta(
        xs in walk(),
        method in 1usize..4,
        d1 in 0.01f64..2.0,
        d2 in 0.01f64..2.0,
    ) {
        // Refits see the true measurements, so forecasts do not depend on delta.
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let s = series(xs);
        let a = run_dps(&s, &configs()[method], 20, 7, lo).unwrap();
        let b = run_dps(&s, &configs()[method], 20, 7, hi).unwrap();
        prop_assert!(b.saved_fraction >= a.saved_fraction);
    }
}

#[test]
fn encode_decode_round_trips_every_method() {
    let xs: Vec<f64> = (0..80).map(|i| (i as f64 * 0.2).sin() + 0.05 * i as f64).collect();
    for cfg in configs() {
        let trace = run_dps(&series(xs.clone()), &cfg, 40, 10, 0.05).unwrap();
        for m in &trace.messages {
            let back = DpsMessage::decode(&m.encode().unwrap()).unwrap();
            assert_eq!(&back, m);
        }
    }
}

#[test]
fn jsonl_has_one_line_per_step() {
    let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.4).cos()).collect();
    let trace = run_dps(&series(xs.clone()), &FitConfig::linear(), 10, 5, 0.1).unwrap();
    let mut buf = Vec::new();
    trace.write_jsonl(&xs, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 50);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["transmitted"], true);
}

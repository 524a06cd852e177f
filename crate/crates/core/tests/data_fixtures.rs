use std::path::{Path, PathBuf};

use proptest::prelude::*;
use wsn_forecast::data::{
    generate_ball, load_csv, load_csv_with, load_running, BallParams, DatasetDescriptor, Family, LoadOptions,
    NoiseTarget,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn intel_fixture_is_regular_after_loading() {
    for group in [1, 2] {
        let desc = DatasetDescriptor::builtin(Family::Intel, group).unwrap();
        let s = load_csv(fixture("intel_sample.csv"), &desc).unwrap();
        // 600 slots, four dropped and refilled.
        assert_eq!(s.len(), 600);
        assert!(s.timestamps().windows(2).all(|w| w[1] - w[0] == 30.0));
        assert_eq!(s.resolution(), 0.01);
    }
}

#[test]
fn intel_fixture_sensor_three_is_absent() {
    let desc = DatasetDescriptor::builtin(Family::Intel, 3).unwrap();
    assert!(load_csv(fixture("intel_sample.csv"), &desc).is_err());
}

#[test]
fn noise_only_touches_filled_points() {
    let desc = DatasetDescriptor::builtin(Family::Sensorscope, 1).unwrap();
    let plain = load_csv_with(
        fixture("sensorscope_sample.csv"),
        &desc,
        &LoadOptions { noise: NoiseTarget::None, ..Default::default() },
    )
    .unwrap();
    let noisy = load_csv(fixture("sensorscope_sample.csv"), &desc).unwrap();
    let changed: Vec<usize> = (0..plain.len()).filter(|&i| plain.values()[i] != noisy.values()[i]).collect();
    assert_eq!(changed, vec![60, 61, 62]);
    assert_eq!(noisy, load_csv(fixture("sensorscope_sample.csv"), &desc).unwrap());
}

#[test]
fn running_and_ball_fixtures_load() {
    let (lat, lon) = load_running(fixture("running_sample.csv"), 1, &LoadOptions::default()).unwrap();
    assert_eq!(lat.len(), 500);
    assert_eq!(lon.len(), 500);
    let ball = load_csv(fixture("ball_sample.csv"), &DatasetDescriptor::builtin(Family::Ball, 1).unwrap()).unwrap();
    assert_eq!(ball.len(), 400);
}

proptest! {
    #[test]
    fn clean_ball_stays_under_envelope(
        theta0 in 0.1f64..500.0,
        lambda in 0.01f64..2.0,
        gamma in 0.0f64..0.5,
        dt in 0.05f64..2.0,
    ) {
        let p = BallParams { theta0, lambda, gamma, n: 300, dt, seed: 0, suppress_noise: true };
        let s = generate_ball(&p).unwrap();
        for (&t, &v) in s.timestamps().iter().zip(s.values()) {
            prop_assert!(v >= 0.0 && v <= p.envelope(t));
        }
        for k in 0..20 {
            prop_assert!(p.clean_value(p.zero_crossing(k)).abs() <= 1e-9 * theta0);
        }
    }
}

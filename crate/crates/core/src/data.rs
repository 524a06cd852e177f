//! Dataset families, their acceptance thresholds, CSV ingestion and the
//! bouncing-ball generator.
//!
//! CSV schemas (header row required, decimal text, UTF-8):
//!
//! | family       | columns                            |
//! |--------------|------------------------------------|
//! | Intel        | `epoch,moteid,temperature`         |
//! | Sensorscope  | `station,epoch,temperature`        |
//! | Running      | `timestamp,latitude,longitude`     |
//! | Ball         | `timestamp,value`                  |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_white_noise_where, interpolate_gaps_with_mask, TimeSeries};

/// Resolution of a 12-bit sensor spanning −55 °C to 130 °C.
pub const SENSORSCOPE_RESOLUTION: f64 = 185.0 / 4096.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Intel,
    Sensorscope,
    Ball,
    RunningLatitude,
    RunningLongitude,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Intel,
        Family::Sensorscope,
        Family::Ball,
        Family::RunningLatitude,
        Family::RunningLongitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Intel => "intel",
            Family::Sensorscope => "sensorscope",
            Family::Ball => "ball",
            Family::RunningLatitude => "running-latitude",
            Family::RunningLongitude => "running-longitude",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Family::Intel | Family::Sensorscope => "°C",
            Family::Ball => "meter",
            Family::RunningLatitude | Family::RunningLongitude => "degree",
        }
    }

    /// Nominal sampling period in seconds.
    pub fn expected_period(self) -> f64 {
        match self {
            Family::Intel => 30.0,
            Family::Sensorscope => 120.0,
            Family::Ball => 1.0,
            Family::RunningLatitude | Family::RunningLongitude => 5.0,
        }
    }

    /// Sensor id used for a group when a file holds several sensors.
    pub fn default_sensor(self, group: u8) -> Option<u32> {
        match (self, group) {
            (Family::Intel, 1) => Some(35),
            (Family::Intel, 2) => Some(21),
            (Family::Intel, 3) => Some(40),
            (Family::Sensorscope, 1) => Some(5),
            (Family::Sensorscope, 2) => Some(7),
            (Family::Sensorscope, 3) => Some(15),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Family::Intel => 1,
            Family::Sensorscope => 2,
            Family::Ball => 3,
            Family::RunningLatitude => 4,
            Family::RunningLongitude => 5,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "intel" => Ok(Family::Intel),
            "sensorscope" => Ok(Family::Sensorscope),
            "ball" => Ok(Family::Ball),
            "running-latitude" | "running-lat" | "latitude" => Ok(Family::RunningLatitude),
            "running-longitude" | "running-lon" | "longitude" => Ok(Family::RunningLongitude),
            other => Err(Error::invalid(format!("unknown dataset family '{other}'"))),
        }
    }
}

/// Acceptance threshold Δmin for a family, equal to the sensor resolution.
pub fn builtin_thresholds(family: Family) -> f64 {
    match family {
        Family::Intel => 0.01,
        Family::Sensorscope => SENSORSCOPE_RESOLUTION,
        Family::Ball => 0.001,
        Family::RunningLatitude | Family::RunningLongitude => 8.38e-8,
    }
}

pub fn builtin_threshold_by_name(family: &str) -> Result<f64> {
    family.parse().map(builtin_thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub family: Family,
    pub group: u8,
    pub delta_min: f64,
    pub expected_period: f64,
}

impl DatasetDescriptor {
    /// Descriptor with the family's built-in threshold and period.
    pub fn builtin(family: Family, group: u8) -> Result<Self> {
        let d = Self {
            family,
            group,
            delta_min: builtin_thresholds(family),
            expected_period: family.expected_period(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.group) {
            return Err(Error::invalid(format!("group must be 1..3, got {}", self.group)));
        }
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return Err(Error::invalid(format!("delta_min must be positive, got {}", self.delta_min)));
        }
        if !(self.expected_period > 0.0 && self.expected_period.is_finite()) {
            return Err(Error::invalid(format!(
                "expected period must be positive, got {}",
                self.expected_period
            )));
        }
        Ok(())
    }

    /// Seed for gap-filling noise, fixed per (family, group).
    pub fn noise_seed(&self) -> u64 {
        0x5753_4e00 ^ (self.family.tag() << 8) ^ self.group as u64
    }
}

/// Which points receive white noise during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseTarget {
    None,
    #[default]
    Inserted,
    All,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Sensor id (mote or station) to keep; defaults to the only one present
    /// or the group's default.
    pub sensor: Option<u32>,
    pub noise: NoiseTarget,
    /// Noise standard deviation; defaults to the descriptor's `delta_min`.
    pub noise_sigma: Option<f64>,
    /// Noise seed; defaults to [`DatasetDescriptor::noise_seed`].
    pub seed: Option<u64>,
}

struct Row {
    line: usize,
    sensor: Option<u32>,
    timestamp: f64,
    value: f64,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn column_layout(family: Family) -> (&'static [&'static str], Option<usize>, usize, usize) {
    // (header, sensor column, timestamp column, value column)
    match family {
        Family::Intel => (&["epoch", "moteid", "temperature"], Some(1), 0, 2),
        Family::Sensorscope => (&["station", "epoch", "temperature"], Some(0), 1, 2),
        Family::Ball => (&["timestamp", "value"], None, 0, 1),
        Family::RunningLatitude => (&["timestamp", "latitude", "longitude"], None, 0, 1),
        Family::RunningLongitude => (&["timestamp", "latitude", "longitude"], None, 0, 2),
    }
}

fn read_rows(path: &Path, family: Family) -> Result<Vec<Row>> {
    let (header, sensor_col, ts_col, value_col) = column_layout(family);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let found = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.is_empty() {
        return Err(parse_err(path, 1, "empty file"));
    }
    let names: Vec<String> = found.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.len() != header.len() || names.iter().zip(header).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}', found '{}'", header.join(","), names.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).unwrap_or_default();
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(path, line, format!("{name}: '{raw}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("{name}: '{raw}' is not finite")));
            }
            Ok(v)
        };
        let sensor = match sensor_col {
            Some(c) => {
                let raw = record.get(c).unwrap_or_default();
                let id = raw
                    .parse::<u32>()
                    .map_err(|_| parse_err(path, line, format!("{}: '{raw}' is not a sensor id", header[c])))?;
                Some(id)
            }
            None => None,
        };
        rows.push(Row {
            line,
            sensor,
            timestamp: field(ts_col, header[ts_col])?,
            value: field(value_col, header[value_col])?,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "file has a header but no data rows"));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn select_sensor(path: &Path, rows: Vec<Row>, desc: &DatasetDescriptor, wanted: Option<u32>) -> Result<Vec<Row>> {
    if rows[0].sensor.is_none() {
        return Ok(rows);
    }
    let mut ids: Vec<u32> = rows.iter().filter_map(|r| r.sensor).collect();
    ids.sort_unstable();
    ids.dedup();
    let id = match wanted {
        Some(id) => id,
        None if ids.len() == 1 => ids[0],
        None => desc.family.default_sensor(desc.group).ok_or_else(|| {
            Error::Data(format!("{}: several sensors present, none selected", path.display()))
        })?,
    };
    let kept: Vec<Row> = rows.into_iter().filter(|r| r.sensor == Some(id)).collect();
    if kept.is_empty() {
        return Err(Error::Data(format!("{}: no rows for sensor {id}", path.display())));
    }
    Ok(kept)
}

/// Loads one series with default options.
pub fn load_csv(path: impl AsRef<Path>, desc: &DatasetDescriptor) -> Result<TimeSeries> {
    load_csv_with(path, desc, &LoadOptions::default())
}

/// Parses, sorts by timestamp, drops duplicate timestamps (the later row
/// wins), fills gaps by linear interpolation and adds white noise per
/// `options`. The series resolution is the descriptor's `delta_min`.
pub fn load_csv_with(path: impl AsRef<Path>, desc: &DatasetDescriptor, options: &LoadOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    desc.validate()?;
    let rows = read_rows(path, desc.family)?;
    let mut rows = select_sensor(path, rows, desc, options.sensor)?;

    // Stable sort keeps file order among equal timestamps; keep the last.
    rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let mut deduped: Vec<Row> = Vec::with_capacity(rows.len());
    for row in rows {
        match deduped.last_mut() {
            Some(last) if last.timestamp == row.timestamp => {
                log::debug!("{}:{}: duplicate timestamp replaces line {}", path.display(), row.line, last.line);
                *last = row;
            }
            _ => deduped.push(row),
        }
    }

    let series = TimeSeries::new(
        deduped.iter().map(|r| r.timestamp).collect(),
        deduped.iter().map(|r| r.value).collect(),
        desc.family.unit(),
        desc.delta_min,
    )?;
    if series.len() < 2 {
        return Ok(series);
    }
    let (filled, inserted) = interpolate_gaps_with_mask(&series, desc.expected_period)?;
    let mask = match options.noise {
        NoiseTarget::None => return Ok(filled),
        NoiseTarget::Inserted => inserted,
        NoiseTarget::All => vec![true; filled.len()],
    };
    let sigma = options.noise_sigma.unwrap_or(desc.delta_min);
    let seed = options.seed.unwrap_or_else(|| desc.noise_seed());
    add_white_noise_where(&filled, sigma, seed, &mask)
}

/// Loads a Running file as its latitude and longitude series.
pub fn load_running(path: impl AsRef<Path>, group: u8, options: &LoadOptions) -> Result<(TimeSeries, TimeSeries)> {
    let path = path.as_ref();
    let lat = load_csv_with(path, &DatasetDescriptor::builtin(Family::RunningLatitude, group)?, options)?;
    let lon = load_csv_with(path, &DatasetDescriptor::builtin(Family::RunningLongitude, group)?, options)?;
    Ok((lat, lon))
}

/// Parameters of θ(t) = θ₀·|cos(2πλt)|·e^{−γt} + ε_t with ε_t ~ N(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    pub theta0: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    /// Drop ε_t; only meant for analytic checks.
    #[serde(default)]
    pub suppress_noise: bool,
}

impl BallParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > 0.0 && self.lambda > 0.0 && self.gamma >= 0.0 && self.dt > 0.0) {
            return Err(Error::invalid("ball parameters need theta0 > 0, lambda > 0, gamma >= 0, dt > 0"));
        }
        if self.n == 0 {
            return Err(Error::invalid("ball series needs n >= 1"));
        }
        Ok(())
    }

    /// Noise-free value at time `t`.
    pub fn clean_value(&self, t: f64) -> f64 {
        self.envelope(t) * (2.0 * std::f64::consts::PI * self.lambda * t).cos().abs()
    }

    /// Upper bound of the noise-free curve at time `t`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.theta0 / (self.gamma * t).exp()
    }

    /// The `k`-th zero of the noise-free curve.
    pub fn zero_crossing(&self, k: u64) -> f64 {
        (2 * k + 1) as f64 / (4.0 * self.lambda)
    }

    /// The descriptor for group `g` of the ball family.
    pub fn descriptor(group: u8) -> Result<DatasetDescriptor> {
        DatasetDescriptor::builtin(Family::Ball, group)
    }
}

/// The three ball configurations: (θ₀, γ) = (50, 0.05), (100, 0.1),
/// (200, 0.1), all with λ = 0.1 Hz, dt = 1 s and 2800 points. Seeds are the
/// group numbers.
pub fn default_ball_configs() -> [BallParams; 3] {
    let base = |theta0, gamma, seed| BallParams {
        theta0,
        lambda: 0.1,
        gamma,
        n: 2800,
        dt: 1.0,
        seed,
        suppress_noise: false,
    };
    [base(50.0, 0.05, 1), base(100.0, 0.1, 2), base(200.0, 0.1, 3)]
}

pub fn generate_ball(p: &BallParams) -> Result<TimeSeries> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let timestamps: Vec<f64> = (0..p.n).map(|k| k as f64 * p.dt).collect();
    let values = timestamps
        .iter()
        .map(|&t| {
            let noise: f64 = if p.suppress_noise { 0.0 } else { StandardNormal.sample(&mut rng) };
            p.clean_value(t) + noise
        })
        .collect();
    TimeSeries::new(timestamps, values, Family::Ball.unit(), builtin_thresholds(Family::Ball))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn clean(theta0: f64, gamma: f64) -> BallParams {
        BallParams {
            theta0,
            lambda: 0.1,
            gamma,
            n: 100,
            dt: 1.0,
            seed: 0,
            suppress_noise: true,
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(builtin_thresholds(Family::Intel), 0.01);
        assert!((builtin_thresholds(Family::Sensorscope) - 0.045166).abs() < 1e-6);
        assert_eq!(builtin_thresholds(Family::RunningLongitude), 8.38e-8);
        assert_eq!(builtin_threshold_by_name("ball").unwrap(), 0.001);
        assert!(builtin_threshold_by_name("humidity").is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }

    #[test]
    fn ball_analytics() {
        let p = clean(50.0, 0.05);
        let s = generate_ball(&p).unwrap();
        assert_eq!(s.values()[0], 50.0);
        assert!(p.clean_value(2.5).abs() < 1e-12);
        assert_eq!(s.unit(), "meter");
    }

    #[test]
    fn ball_is_seeded() {
        let p = default_ball_configs()[0];
        assert_eq!(generate_ball(&p).unwrap(), generate_ball(&p).unwrap());
        let other = BallParams { seed: 9, ..p };
        assert_ne!(generate_ball(&p).unwrap(), generate_ball(&other).unwrap());
    }

    #[test]
    fn ball_noise_is_unit_gaussian() {
        let p = BallParams { n: 20_000, ..default_ball_configs()[1] };
        let s = generate_ball(&p).unwrap();
        let resid: Vec<f64> = s
            .timestamps()
            .iter()
            .zip(s.values())
            .map(|(&t, &v)| v - p.clean_value(t))
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var.sqrt() - 1.0).abs() < 0.03);
    }

    #[test]
    fn two_rows() {
        let f = csv_file("timestamp,value\n0,1.5\n1,2.5\n");
        let s = load_csv(f.path(), &DatasetDescriptor::builtin(Family::Ball, 1).unwrap()).unwrap();
        assert_eq!(s.values(), &[1.5, 2.5]);
        assert_eq!(s.resolution(), 0.001);
    }

    #[test]
    fn sorts_and_dedups() {
        let f = csv_file("timestamp,value\n2,3\n0,1\n1,2\n1,7\n");
        let s = load_csv(f.path(), &DatasetDescriptor::builtin(Family::Ball, 1).unwrap()).unwrap();
        assert_eq!(s.timestamps(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.values(), &[1.0, 7.0, 3.0]);
    }

    #[test]
    fn fills_one_missing_sample() {
        let f = csv_file("epoch,moteid,temperature\n0,35,20\n30,35,21\n90,35,23\n");
        let desc = DatasetDescriptor::builtin(Family::Intel, 1).unwrap();
        let opts = LoadOptions { noise: NoiseTarget::None, ..Default::default() };
        let s = load_csv_with(f.path(), &desc, &opts).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.values()[2], 22.0);
        let noisy = load_csv(f.path(), &desc).unwrap();
        assert_eq!(noisy.len(), 4);
        assert_eq!(noisy.values()[1], 21.0);
        assert_ne!(noisy.values()[2], 22.0);
        assert_eq!(noisy, load_csv(f.path(), &desc).unwrap());
    }

    #[test]
    fn picks_group_sensor() {
        let f = csv_file("station,epoch,temperature\n5,0,1\n7,0,9\n5,120,2\n7,120,8\n");
        let desc = DatasetDescriptor::builtin(Family::Sensorscope, 2).unwrap();
        let s = load_csv(f.path(), &desc).unwrap();
        assert_eq!(s.values(), &[9.0, 8.0]);
        let opts = LoadOptions { sensor: Some(5), ..Default::default() };
        assert_eq!(load_csv_with(f.path(), &desc, &opts).unwrap().values(), &[1.0, 2.0]);
        let missing = LoadOptions { sensor: Some(99), ..Default::default() };
        assert!(matches!(load_csv_with(f.path(), &desc, &missing), Err(Error::Data(_))));
    }

    #[test]
    fn running_splits_axes() {
        let f = csv_file("timestamp,latitude,longitude\n0,46.5,6.6\n5,46.6,6.7\n");
        let (lat, lon) = load_running(f.path(), 1, &LoadOptions::default()).unwrap();
        assert_eq!(lat.values(), &[46.5, 46.6]);
        assert_eq!(lon.values(), &[6.6, 6.7]);
        assert_eq!(lat.unit(), "degree");
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = csv_file("timestamp,value\n0,1\n1,abc\n");
        let err = load_csv(f.path(), &DatasetDescriptor::builtin(Family::Ball, 1).unwrap()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_wrong_header() {
        let desc = DatasetDescriptor::builtin(Family::Ball, 1).unwrap();
        assert!(load_csv(csv_file("").path(), &desc).is_err());
        assert!(load_csv(csv_file("timestamp,value\n").path(), &desc).is_err());
        assert!(load_csv(csv_file("t,v\n0,1\n").path(), &desc).is_err());
        assert!(matches!(load_csv("/nonexistent/file.csv", &desc), Err(Error::Io { .. })));
    }
}

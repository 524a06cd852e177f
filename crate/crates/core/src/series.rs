//! Time-series container and preprocessing: gap interpolation, white-noise
//! injection, resolution quantization and history/window split extraction.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, time-indexed scalar observations.
///
/// Timestamps are seconds and strictly increasing. `resolution` is the
/// smallest change the producing sensor can indicate, in the series' unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
    unit: String,
    resolution: f64,
}

impl TimeSeries {
    pub fn new(
        timestamps: Vec<f64>,
        values: Vec<f64>,
        unit: impl Into<String>,
        resolution: f64,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            timestamps,
            values,
            unit: unit.into(),
            resolution,
        })
    }

    /// Series sampled once per second starting at t = 0.
    pub fn from_values(values: Vec<f64>, unit: impl Into<String>, resolution: f64) -> Result<Self> {
        let timestamps = (0..values.len()).map(|i| i as f64).collect();
        Self::new(timestamps, values, unit, resolution)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_resolution(mut self, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        self.resolution = resolution;
        Ok(self)
    }

    /// Returns the first `n` observations.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            timestamps: self.timestamps[..n].to_vec(),
            values: self.values[..n].to_vec(),
            unit: self.unit.clone(),
            resolution: self.resolution,
        }
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            values,
            unit: self.unit.clone(),
            resolution: self.resolution,
        }
    }
}

/// One history followed immediately by one window, borrowed from a parent
/// series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<'a> {
    pub history: &'a [f64],
    pub window: &'a [f64],
    /// Index of the first history value in the parent series.
    pub origin_index: usize,
}

/// Fills gaps on the regular grid implied by `expected_period`.
///
/// Two consecutive observations `gap` seconds apart receive
/// `round(gap / period) - 1` new points at `t + k·period`, each linearly
/// interpolated between the two observations. Observed points are kept as
/// they are, so irregular spacing below 1.5 periods passes through untouched.
pub fn interpolate_gaps(series: &TimeSeries, expected_period: f64) -> Result<TimeSeries> {
    interpolate_gaps_with_mask(series, expected_period).map(|(s, _)| s)
}

/// Like [`interpolate_gaps`], also returning which output points were
/// inserted.
pub fn interpolate_gaps_with_mask(
    series: &TimeSeries,
    expected_period: f64,
) -> Result<(TimeSeries, Vec<bool>)> {
    if !(expected_period > 0.0 && expected_period.is_finite()) {
        return Err(Error::invalid(format!(
            "expected period must be positive, got {expected_period}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }

    let ts = series.timestamps();
    let xs = series.values();
    let mut out_t = Vec::with_capacity(ts.len());
    let mut out_x = Vec::with_capacity(xs.len());
    let mut inserted = Vec::with_capacity(xs.len());

    for i in 0..ts.len() - 1 {
        out_t.push(ts[i]);
        out_x.push(xs[i]);
        inserted.push(false);

        let gap = ts[i + 1] - ts[i];
        let missing = ((gap / expected_period).round() as usize).saturating_sub(1);
        for k in 1..=missing {
            let t = ts[i] + k as f64 * expected_period;
            if t >= ts[i + 1] {
                break;
            }
            let frac = (t - ts[i]) / gap;
            out_t.push(t);
            out_x.push(xs[i] + frac * (xs[i + 1] - xs[i]));
            inserted.push(true);
        }
    }
    out_t.push(ts[ts.len() - 1]);
    out_x.push(xs[xs.len() - 1]);
    inserted.push(false);

    let out = TimeSeries::new(out_t, out_x, series.unit(), series.resolution())?;
    Ok((out, inserted))
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `sigma` to
/// every value.
pub fn add_white_noise(series: &TimeSeries, sigma: f64, seed: u64) -> Result<TimeSeries> {
    let mask = vec![true; series.len()];
    add_white_noise_where(series, sigma, seed, &mask)
}

/// Adds noise only where `mask` is true. Draws happen in index order, one per
/// selected point.
pub fn add_white_noise_where(
    series: &TimeSeries,
    sigma: f64,
    seed: u64,
    mask: &[bool],
) -> Result<TimeSeries> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if mask.len() != series.len() {
        return Err(Error::invalid("noise mask length differs from series length"));
    }
    if sigma == 0.0 {
        return Ok(series.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = series
        .values()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v + normal.sample(&mut rng) } else { v })
        .collect();
    Ok(series.with_values(values))
}

/// Rounds one value to the nearest multiple of `r`, halves away from zero.
pub fn quantize_value(value: f64, r: f64) -> f64 {
    (value / r).round() * r
}

/// Simulates a sensor with resolution `r`: every value becomes the nearest
/// multiple of `r`. The returned series carries `r` as its resolution.
pub fn quantize_to_resolution(series: &TimeSeries, r: f64) -> Result<TimeSeries> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("resolution must be positive, got {r}")));
    }
    let values = series.values().iter().map(|&v| quantize_value(v, r)).collect();
    series.with_values(values).with_resolution(r)
}

/// Draws `n_splits` history/window splits with origins uniform over all
/// valid positions.
///
/// Origins are distinct when enough positions exist and drawn with
/// replacement otherwise. Splits index observations, not wall time.
pub fn extract_splits(
    series: &TimeSeries,
    history: usize,
    window: usize,
    n_splits: usize,
    seed: u64,
) -> Result<Vec<Split<'_>>> {
    split_origins(series.len(), history, window, n_splits, seed).map(|origins| {
        let xs = series.values();
        origins
            .into_iter()
            .map(|o| Split {
                history: &xs[o..o + history],
                window: &xs[o + history..o + history + window],
                origin_index: o,
            })
            .collect()
    })
}

/// Origin indices used by [`extract_splits`].
pub fn split_origins(
    len: usize,
    history: usize,
    window: usize,
    n_splits: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if history == 0 || window == 0 {
        return Err(Error::invalid("history and window lengths must be >= 1"));
    }
    let needed = history + window;
    if len < needed {
        return Err(Error::TooShort { needed, got: len });
    }
    let positions = len - needed + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origins = if positions >= n_splits {
        index::sample(&mut rng, positions, n_splits).into_vec()
    } else {
        (0..n_splits).map(|_| rng.random_range(0..positions)).collect()
    };
    Ok(origins)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quantize_is_idempotent(
            xs in prop::collection::vec(-1e4f64..1e4, 1..60),
            r in 1e-3f64..10.0,
        ) {
            let s = TimeSeries::from_values(xs, "u", 1.0).unwrap();
            let q1 = quantize_to_resolution(&s, r).unwrap();
            let q2 = quantize_to_resolution(&q1, r).unwrap();
            prop_assert_eq!(q1.values(), q2.values());
            for w in q1.values().windows(2) {
                let steps = (w[1] - w[0]).abs() / r;
                prop_assert!((steps - steps.round()).abs() <= 1e-9 * steps.max(1.0));
            }
        }

        #[test]
        fn interpolation_is_idempotent(
            gaps in prop::collection::vec(1usize..5, 1..30),
            xs in prop::collection::vec(-100f64..100.0, 31),
        ) {
            let mut t = vec![0.0];
            for g in &gaps {
                let last = *t.last().unwrap();
                t.push(last + *g as f64 * 30.0);
            }
            let s = TimeSeries::new(t.clone(), xs[..t.len()].to_vec(), "u", 1.0).unwrap();
            let once = interpolate_gaps(&s, 30.0).unwrap();
            let twice = interpolate_gaps(&once, 30.0).unwrap();
            prop_assert_eq!(&once, &twice);
            let expected_len = 1 + gaps.iter().sum::<usize>();
            prop_assert_eq!(once.len(), expected_len);
        }

        #[test]
        fn splits_stay_inside_series(
            len in 2usize..400,
            h in 1usize..50,
            w in 1usize..50,
            n in 1usize..60,
            seed in any::<u64>(),
        ) {
            let s = TimeSeries::from_values(vec![0.0; len], "u", 1.0).unwrap();
            match extract_splits(&s, h, w, n, seed) {
                Ok(splits) => {
                    prop_assert_eq!(splits.len(), n);
                    for sp in splits {
                        prop_assert!(sp.origin_index + h + w <= len);
                        prop_assert_eq!(sp.history.len(), h);
                        prop_assert_eq!(sp.window.len(), w);
                    }
                }
                Err(_) => prop_assert!(len < h + w),
            }
        }
    }
}

//! Constant, Linear and Simple Mean: closed-form methods with no search.

use super::{gaussian_aicc, mean, scale_of, ForecastModel, MethodKind};
use crate::error::{Error, Result};

fn too_short(needed: usize, got: usize) -> Error {
    Error::TooShort { needed, got }
}

/// Repeats the last observed value.
pub fn fit_constant(history: &[f64]) -> Result<ForecastModel> {
    let last = *history.last().ok_or_else(|| too_short(1, 0))?;
    let sse: f64 = history.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(ForecastModel {
        kind: MethodKind::Constant,
        orders: None,
        params: vec![last],
        state: Vec::new(),
        k: 1,
        fit_n: history.len(),
        aicc: gaussian_aicc(sse, 1, history.len().saturating_sub(1), scale_of(history)),
    })
}

/// Extends the line through the last two values.
pub fn fit_linear(history: &[f64]) -> Result<ForecastModel> {
    let n = history.len();
    if n < 2 {
        return Err(too_short(2, n));
    }
    let last = history[n - 1];
    let slope = last - history[n - 2];
    let sse: f64 = history
        .windows(3)
        .map(|w| (w[2] - (2.0 * w[1] - w[0])).powi(2))
        .sum();
    Ok(ForecastModel {
        kind: MethodKind::Linear,
        orders: None,
        params: vec![last, slope],
        state: Vec::new(),
        k: 1,
        fit_n: n,
        aicc: gaussian_aicc(sse, 1, n.saturating_sub(2), scale_of(history)),
    })
}

/// Forecasts the history mean.
pub fn fit_simple_mean(history: &[f64]) -> Result<ForecastModel> {
    if history.is_empty() {
        return Err(too_short(1, 0));
    }
    let m = mean(history);
    let sse: f64 = history.iter().map(|x| (x - m).powi(2)).sum();
    Ok(ForecastModel {
        kind: MethodKind::SimpleMean,
        orders: None,
        params: vec![m],
        state: Vec::new(),
        k: 2,
        fit_n: history.len(),
        aicc: gaussian_aicc(sse, 2, history.len(), scale_of(history)),
    })
}

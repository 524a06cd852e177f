//! Exponential smoothing: simple (level) and Holt's linear trend.
//!
//! Smoothing parameters minimize the in-sample one-step squared error. The
//! search is a coarse grid of `budget + 1` points per parameter on
//! [0.01, 0.99] followed by `budget` golden-section steps around the best
//! grid point. Variants are compared by AICc with `k` = smoothing
//! parameters + initial states.

use super::optim::golden_section;
use super::{gaussian_aicc, ranks_before, scale_of, EsVariant, FitConfig, ForecastModel, MethodKind};
use crate::error::{Error, Result};

const LOWER: f64 = 0.01;
const UPPER: f64 = 0.99;
pub(crate) const MIN_HISTORY: usize = 4;

fn simple_sse(x: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = x[0];
    let mut sse = 0.0;
    for &v in &x[1..] {
        let e = v - level;
        sse += e * e;
        level = alpha * v + (1.0 - alpha) * level;
    }
    (sse, level)
}

fn holt_sse(x: &[f64], alpha: f64, beta: f64) -> (f64, f64, f64) {
    let mut level = x[0];
    let mut trend = x[1] - x[0];
    let mut sse = 0.0;
    for &v in &x[1..] {
        let f = level + trend;
        let e = v - f;
        sse += e * e;
        let next = alpha * v + (1.0 - alpha) * f;
        trend = beta * (next - level) + (1.0 - beta) * trend;
        level = next;
    }
    (sse, level, trend)
}

fn coarse_grid(budget: u32) -> Vec<f64> {
    let n = budget as usize + 1;
    (0..n)
        .map(|i| (LOWER + (UPPER - LOWER) * i as f64 / (n - 1) as f64).min(UPPER))
        .collect()
}

fn argmin<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &g) in grid.iter().enumerate() {
        let v = f(g);
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Golden-section refinement between the neighbours of `grid[idx]`.
fn refine<F: Fn(f64) -> f64>(grid: &[f64], idx: usize, fx: f64, budget: u32, f: F) -> f64 {
    let lo = grid[idx.saturating_sub(1)];
    let hi = grid[(idx + 1).min(grid.len() - 1)];
    if hi <= lo {
        return grid[idx];
    }
    golden_section(f, lo, hi, budget as usize, Some((grid[idx], fx))).0
}

fn fit_simple(x: &[f64], config: &FitConfig) -> ForecastModel {
    let sse_of = |a: f64| simple_sse(x, a).0;
    let alpha = match &config.alpha_grid {
        Some(grid) => grid[argmin(grid, sse_of).0],
        None => {
            let grid = coarse_grid(config.budget);
            let (i, v) = argmin(&grid, sse_of);
            refine(&grid, i, v, config.budget, sse_of)
        }
    };
    let (sse, level) = simple_sse(x, alpha);
    ForecastModel {
        kind: MethodKind::ExponentialSmoothing,
        orders: None,
        params: vec![alpha],
        state: vec![level],
        k: 2,
        fit_n: x.len(),
        aicc: gaussian_aicc(sse, 2, x.len() - 1, scale_of(x)),
    }
}

fn fit_holt(x: &[f64], config: &FitConfig) -> ForecastModel {
    let coarse = coarse_grid(config.budget);
    let alphas = config.alpha_grid.as_deref().unwrap_or(&coarse);
    let betas = config.beta_grid.as_deref().unwrap_or(&coarse);

    let mut best = (0usize, 0usize, f64::INFINITY);
    for (i, &a) in alphas.iter().enumerate() {
        for (j, &b) in betas.iter().enumerate() {
            let v = holt_sse(x, a, b).0;
            if v < best.2 {
                best = (i, j, v);
            }
        }
    }
    let (mut alpha, mut beta, mut fx) = (alphas[best.0], betas[best.1], best.2);
    if config.alpha_grid.is_none() {
        alpha = refine(alphas, best.0, fx, config.budget, |a| holt_sse(x, a, beta).0);
        fx = holt_sse(x, alpha, beta).0;
    }
    if config.beta_grid.is_none() {
        beta = refine(betas, best.1, fx, config.budget, |b| holt_sse(x, alpha, b).0);
    }

    let (sse, level, trend) = holt_sse(x, alpha, beta);
    ForecastModel {
        kind: MethodKind::ExponentialSmoothing,
        orders: None,
        params: vec![alpha, beta],
        state: vec![level, trend],
        k: 4,
        fit_n: x.len(),
        aicc: gaussian_aicc(sse, 4, x.len() - 1, scale_of(x)),
    }
}

/// Fits each requested ES variant and keeps the one with the lower AICc.
pub fn fit_es(history: &[f64], config: &FitConfig) -> Result<ForecastModel> {
    if history.len() < MIN_HISTORY {
        return Err(Error::TooShort {
            needed: MIN_HISTORY,
            got: history.len(),
        });
    }
    config.validate()?;
    let mut best: Option<ForecastModel> = None;
    for variant in &config.es_variants {
        let model = match variant {
            EsVariant::Simple => fit_simple(history, config),
            EsVariant::Holt => fit_holt(history, config),
        };
        if best.as_ref().is_none_or(|b| ranks_before(&model, b)) {
            best = Some(model);
        }
    }
    best.ok_or_else(|| Error::invalid("ES variant set is empty"))
}

pub(crate) fn forecast(model: &ForecastModel, window: usize) -> Vec<f64> {
    match model.state.as_slice() {
        [level] => vec![*level; window],
        [level, trend] => (1..=window).map(|i| level + i as f64 * trend).collect(),
        _ => unreachable!("ES state has one or two entries"),
    }
}

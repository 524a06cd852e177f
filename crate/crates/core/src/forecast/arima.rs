//! ARIMA(p, d, q) by conditional sum of squares.
//!
//! The differencing order is fixed first; (p, q) are then chosen by AICc
//! among the grid entries sharing that d. Coefficients minimize the
//! conditional sum of squares with pre-sample residuals at zero and the
//! first max(p, q) residuals left out of the objective. Pure AR candidates
//! are solved exactly by least squares; candidates with an MA part start
//! from Hannan–Rissanen estimates and are refined by Nelder–Mead for at
//! most `budget³` iterations. The intercept is only estimated when d = 0.

use super::linalg::ols;
use super::optim::{nelder_mead, SimplexOptions};
use super::{gaussian_aicc, mean, scale_of, ranks_before, ArimaOrder, DifferencingRule, FitConfig, ForecastModel, MethodKind};
use crate::error::{Error, Result};

/// Asymptotic 5% critical value of the Dickey–Fuller t statistic with a
/// constant and no trend.
pub const ADF_CRITICAL_5PCT: f64 = -2.86;

/// Fits with an AR or MA root modulus at or below this are rejected.
const ROOT_MARGIN: f64 = 1.001;

/// Minimum extra observations beyond the largest p + d + q in the grid.
const MIN_EXTRA: usize = 10;

/// AICc parameter count: coefficients, intercept (d = 0 only), variance.
pub(crate) fn param_count(o: ArimaOrder) -> usize {
    o.p as usize + o.q as usize + usize::from(o.d == 0) + 1
}

fn difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn difference_n(x: &[f64], d: u8) -> Vec<f64> {
    (0..d).fold(x.to_vec(), |acc, _| difference(&acc))
}

fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn is_flat(x: &[f64]) -> bool {
    let m = mean(x);
    variance(x) <= 1e-20 * (1.0 + m * m)
}

/// Augmented Dickey–Fuller t statistic (constant, no trend) with
/// `min(4, ⌊∛(n−1)⌋)` lagged differences. `None` when the regression is too
/// short or degenerate.
pub fn adf_statistic(y: &[f64]) -> Option<f64> {
    let m = y.len();
    if m < 8 {
        return None;
    }
    let lags = ((m - 1) as f64).cbrt().floor().min(4.0) as usize;
    let k = 2 + lags;
    let rows: Vec<Vec<f64>> = (lags + 1..m)
        .map(|t| {
            let mut r = Vec::with_capacity(k);
            r.push(1.0);
            r.push(y[t - 1]);
            for i in 1..=lags {
                r.push(y[t - i] - y[t - i - 1]);
            }
            r
        })
        .collect();
    let resp: Vec<f64> = (lags + 1..m).map(|t| y[t] - y[t - 1]).collect();
    let nobs = resp.len();
    if nobs <= k + 2 {
        return None;
    }
    let fit = ols(&rows, &resp)?;
    let s2 = fit.sse / (nobs - k) as f64;
    let se = (s2 * fit.inv_diag[1]).sqrt();
    if !(se > 0.0 && se.is_finite()) {
        return None;
    }
    Some(fit.coef[1] / se)
}

/// Picks d among `allowed` (searched in increasing order). Falls back to the
/// largest allowed d when no smaller one qualifies.
pub fn choose_differencing(x: &[f64], allowed: &[u8], rule: DifferencingRule) -> u8 {
    let mut ds = allowed.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let Some(&largest) = ds.last() else {
        return 0;
    };
    for &d in &ds {
        let w = difference_n(x, d);
        if w.len() < 2 || is_flat(&w) {
            return d;
        }
        let stationary = match rule {
            DifferencingRule::UnitRoot => adf_statistic(&w).is_none_or(|t| t < ADF_CRITICAL_5PCT),
            DifferencingRule::VarianceReduction => variance(&difference(&w)) >= variance(&w),
        };
        if stationary {
            return d;
        }
    }
    largest
}

/// Smallest root modulus of `1 + a1·z + a2·z²` (∞ when there is no root).
fn min_root_modulus(a1: f64, a2: f64) -> f64 {
    if a2 == 0.0 {
        return if a1 == 0.0 { f64::INFINITY } else { 1.0 / a1.abs() };
    }
    let disc = a1 * a1 - 4.0 * a2;
    if disc < 0.0 {
        (1.0 / a2.abs()).sqrt()
    } else {
        let s = disc.sqrt();
        let r1 = ((-a1 + s) / (2.0 * a2)).abs();
        let r2 = ((-a1 - s) / (2.0 * a2)).abs();
        r1.min(r2)
    }
}

fn coeff(c: &[f64], i: usize) -> f64 {
    c.get(i).copied().unwrap_or(0.0)
}

fn admissible(phi: &[f64], theta: &[f64]) -> bool {
    let ar = min_root_modulus(-coeff(phi, 0), -coeff(phi, 1));
    let ma = min_root_modulus(coeff(theta, 0), coeff(theta, 1));
    ar > ROOT_MARGIN && ma > ROOT_MARGIN
}

/// Conditional residuals and their sum of squares over t ≥ max(p, q).
fn css(w: &[f64], phi: &[f64], theta: &[f64], c: f64) -> (f64, Vec<f64>) {
    let (p, q) = (phi.len(), theta.len());
    let start = p.max(q);
    let mut e = vec![0.0; w.len()];
    let mut sse = 0.0;
    for t in start..w.len() {
        let mut pred = c;
        for (i, f) in phi.iter().enumerate() {
            pred += f * w[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            pred += th * e[t - 1 - j];
        }
        e[t] = w[t] - pred;
        sse += e[t] * e[t];
    }
    (sse, e)
}

struct Coefs {
    phi: Vec<f64>,
    theta: Vec<f64>,
    c: f64,
}

fn lag_row(w: &[f64], t: usize, p: usize, intercept: bool) -> Vec<f64> {
    let mut r = Vec::with_capacity(p + 1);
    if intercept {
        r.push(1.0);
    }
    r.extend((1..=p).map(|i| w[t - i]));
    r
}

fn split_coefs(v: &[f64], p: usize, q: usize, intercept: bool) -> Coefs {
    Coefs {
        phi: v[..p].to_vec(),
        theta: v[p..p + q].to_vec(),
        c: if intercept { v[p + q] } else { 0.0 },
    }
}

/// Exact CSS solution when there is no MA part.
fn fit_pure_ar(w: &[f64], p: usize, intercept: bool) -> Option<Coefs> {
    if p == 0 {
        return Some(Coefs {
            phi: Vec::new(),
            theta: Vec::new(),
            c: if intercept { mean(w) } else { 0.0 },
        });
    }
    let rows: Vec<Vec<f64>> = (p..w.len()).map(|t| lag_row(w, t, p, intercept)).collect();
    let fit = ols(&rows, &w[p..])?;
    let offset = usize::from(intercept);
    Some(Coefs {
        phi: fit.coef[offset..].to_vec(),
        theta: Vec::new(),
        c: if intercept { fit.coef[0] } else { 0.0 },
    })
}

/// Hannan–Rissanen: long AR for residual proxies, then one regression on
/// lagged values and lagged proxies.
fn hannan_rissanen(w: &[f64], p: usize, q: usize, intercept: bool) -> Option<Coefs> {
    let m = w.len();
    let order = p.max(q);
    let long = (2 * order).max(6).min(m / 4);
    if long < order.max(1) {
        return None;
    }
    let rows: Vec<Vec<f64>> = (long..m).map(|t| lag_row(w, t, long, intercept)).collect();
    let ar = ols(&rows, &w[long..])?;
    let mut proxy = vec![0.0; m];
    for t in long..m {
        let fit: f64 = lag_row(w, t, long, intercept)
            .iter()
            .zip(&ar.coef)
            .map(|(a, b)| a * b)
            .sum();
        proxy[t] = w[t] - fit;
    }
    let start = (long + q).max(p);
    if m <= start + p + q + 2 {
        return None;
    }
    let rows: Vec<Vec<f64>> = (start..m)
        .map(|t| {
            let mut r = lag_row(w, t, p, intercept);
            r.extend((1..=q).map(|j| proxy[t - j]));
            r
        })
        .collect();
    let fit = ols(&rows, &w[start..])?;
    let offset = usize::from(intercept);
    Some(Coefs {
        phi: fit.coef[offset..offset + p].to_vec(),
        theta: fit.coef[offset + p..].to_vec(),
        c: if intercept { fit.coef[0] } else { 0.0 },
    })
}

fn shrink_to_admissible(mut c: Coefs) -> Coefs {
    for _ in 0..60 {
        if admissible(&c.phi, &c.theta) {
            return c;
        }
        c.phi.iter_mut().chain(c.theta.iter_mut()).for_each(|v| *v *= 0.9);
    }
    c.phi.iter_mut().chain(c.theta.iter_mut()).for_each(|v| *v = 0.0);
    c
}

fn fit_with_ma(w: &[f64], p: usize, q: usize, intercept: bool, budget: u32) -> Coefs {
    let init = hannan_rissanen(w, p, q, intercept).unwrap_or_else(|| Coefs {
        phi: vec![0.0; p],
        theta: vec![0.0; q],
        c: if intercept { mean(w) } else { 0.0 },
    });
    let init = shrink_to_admissible(init);

    let mut x0 = init.phi.clone();
    x0.extend(&init.theta);
    let spread = variance(w).sqrt();
    let mut steps = vec![0.1; p + q];
    if intercept {
        x0.push(init.c);
        steps.push((0.1 * spread).max(1e-3 * init.c.abs()).max(1e-8));
    }

    let objective = |v: &[f64]| {
        let c = split_coefs(v, p, q, intercept);
        if !admissible(&c.phi, &c.theta) {
            return f64::INFINITY;
        }
        css(w, &c.phi, &c.theta, c.c).0
    };
    let opts = SimplexOptions {
        max_iterations: (budget as usize).pow(3),
        initial_step: steps,
        ftol: 1e-10,
    };
    let out = nelder_mead(objective, &x0, &opts);
    split_coefs(&out.x, p, q, intercept)
}

fn fit_candidate(x: &[f64], w: &[f64], order: ArimaOrder, budget: u32) -> Option<ForecastModel> {
    let (p, d, q) = (order.p as usize, order.d, order.q as usize);
    let intercept = d == 0;
    let coefs = if q == 0 {
        fit_pure_ar(w, p, intercept)?
    } else {
        fit_with_ma(w, p, q, intercept, budget)
    };
    if !admissible(&coefs.phi, &coefs.theta) {
        return None;
    }
    if coefs.phi.iter().chain(&coefs.theta).any(|v| !v.is_finite()) || !coefs.c.is_finite() {
        return None;
    }
    let (sse, resid) = css(w, &coefs.phi, &coefs.theta, coefs.c);
    let n_eff = w.len() - p.max(q);
    let k = param_count(order);
    let aicc = gaussian_aicc(sse, k, n_eff, scale_of(x))?;

    let mut params = coefs.phi;
    params.extend(&coefs.theta);
    params.push(coefs.c);

    let mut state = w[w.len() - p..].to_vec();
    state.extend_from_slice(&resid[resid.len() - q..]);
    for level in 0..d {
        let diffed = difference_n(x, level);
        state.push(*diffed.last()?);
    }

    Some(ForecastModel {
        kind: MethodKind::Arima,
        orders: Some(order),
        params,
        state,
        k,
        fit_n: x.len(),
        aicc: Some(aicc),
    })
}

/// Minimum history accepted for a given order grid.
pub(crate) fn min_history(grid: &[ArimaOrder]) -> usize {
    MIN_EXTRA
        + grid
            .iter()
            .map(|o| (o.p + o.d + o.q) as usize)
            .max()
            .unwrap_or(0)
}

/// Fits ARIMA over `config.order_grid`.
pub fn fit_arima(history: &[f64], config: &FitConfig) -> Result<ForecastModel> {
    config.validate()?;
    let needed = min_history(&config.order_grid);
    if history.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: history.len(),
        });
    }
    let ds: Vec<u8> = config.order_grid.iter().map(|o| o.d).collect();
    let d = choose_differencing(history, &ds, config.differencing);
    let w = difference_n(history, d);

    let mut best: Option<ForecastModel> = None;
    for &order in config.order_grid.iter().filter(|o| o.d == d) {
        let Some(model) = fit_candidate(history, &w, order, config.budget) else {
            log::debug!("ARIMA{order} rejected");
            continue;
        };
        if best.as_ref().is_none_or(|b| ranks_before(&model, b)) {
            best = Some(model);
        }
    }
    best.ok_or_else(|| {
        Error::Fit(format!(
            "every ARIMA candidate with d={d} was degenerate on a history of {} values \
             (first {:.6}, last {:.6})",
            history.len(),
            history[0],
            history[history.len() - 1]
        ))
    })
}

pub(crate) fn forecast(model: &ForecastModel, window: usize) -> Result<Vec<f64>> {
    let o = model
        .orders
        .ok_or_else(|| Error::invalid("ARIMA model without orders"))?;
    let (p, d, q) = (o.p as usize, o.d as usize, o.q as usize);
    if model.params.len() != p + q + 1 || model.state.len() != p + q + d {
        return Err(Error::invalid("ARIMA model has inconsistent parameter/state sizes"));
    }
    let phi = &model.params[..p];
    let theta = &model.params[p..p + q];
    let c = model.params[p + q];
    let mut lags = model.state[..p].to_vec();
    let mut shocks = model.state[p..p + q].to_vec();
    let mut anchors = model.state[p + q..].to_vec();

    let mut out = Vec::with_capacity(window);
    for _ in 0..window {
        let mut pred = c;
        for (i, f) in phi.iter().enumerate() {
            pred += f * lags[p - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            pred += th * shocks[q - 1 - j];
        }
        if p > 0 {
            lags.rotate_left(1);
            lags[p - 1] = pred;
        }
        if q > 0 {
            shocks.rotate_left(1);
            shocks[q - 1] = 0.0;
        }
        let mut v = pred;
        for a in anchors.iter_mut().rev() {
            *a += v;
            v = *a;
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{fit_constant, fit_simple_mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 200;
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n);
        for t in 0..n + burn {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + e;
            if t >= burn {
                out.push(x);
            }
        }
        out
    }

    fn yule_walker_ar1(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let r0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let r1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        r1 / r0
    }

    #[test]
    fn random_walk_order_matches_constant() {
        let h = ar1(0.3, 60, 5);
        let cfg = FitConfig::arima_with_orders(vec![ArimaOrder::new(0, 1, 0)]);
        let a = fit_arima(&h, &cfg).unwrap().forecast(9).unwrap();
        assert_eq!(a, fit_constant(&h).unwrap().forecast(9).unwrap());
    }

    #[test]
    fn white_noise_order_matches_mean() {
        let h = ar1(0.0, 80, 6);
        let cfg = FitConfig::arima_with_orders(vec![ArimaOrder::new(0, 0, 0)]);
        let a = fit_arima(&h, &cfg).unwrap().forecast(4).unwrap();
        let m = fit_simple_mean(&h).unwrap().forecast(4).unwrap();
        for (x, y) in a.iter().zip(&m) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn ar1_coefficient_close_to_yule_walker() {
        let h = ar1(0.8, 500, 42);
        let cfg = FitConfig::arima_with_orders(vec![ArimaOrder::new(1, 0, 0)]);
        let m = fit_arima(&h, &cfg).unwrap();
        let oracle = yule_walker_ar1(&h);
        assert!((m.params[0] - oracle).abs() < 0.15);
        assert!((m.params[0] - 0.8).abs() < 0.15);
    }

    #[test]
    fn ar1_selection_keeps_d_zero() {
        let h = ar1(0.8, 500, 7);
        let m = fit_arima(&h, &FitConfig::arima()).unwrap();
        let o = m.orders.unwrap();
        assert_eq!(o.d, 0);
        assert!(o.p >= 1);
    }

    #[test]
    fn variance_rule_differences_strong_ar1() {
        // The variance rule sees var(Δx) = 2(1-φ)var(x) < var(x) for φ > 0.5.
        let h = ar1(0.8, 500, 7);
        assert_eq!(choose_differencing(&h, &[0, 1, 2], DifferencingRule::VarianceReduction), 1);
        assert_eq!(choose_differencing(&h, &[0, 1, 2], DifferencingRule::UnitRoot), 0);
    }

    #[test]
    fn unit_root_is_differenced() {
        let mut x = 0.0;
        let walk: Vec<f64> = ar1(0.0, 400, 9)
            .into_iter()
            .map(|e| {
                x += e;
                x
            })
            .collect();
        assert_eq!(choose_differencing(&walk, &[0, 1, 2], DifferencingRule::UnitRoot), 1);
    }

    #[test]
    fn constant_series_needs_no_differencing() {
        assert_eq!(choose_differencing(&[2.0; 40], &[0, 1, 2], DifferencingRule::UnitRoot), 0);
        assert_eq!(choose_differencing(&[2.0; 40], &[0, 1, 2], DifferencingRule::VarianceReduction), 0);
    }

    #[test]
    fn restricted_d_is_respected() {
        let h = ar1(0.5, 100, 1);
        assert_eq!(choose_differencing(&h, &[2], DifferencingRule::UnitRoot), 2);
    }

    #[test]
    fn rejects_short_history() {
        let err = fit_arima(&[1.0; 15], &FitConfig::arima()).unwrap_err();
        assert!(matches!(err, Error::TooShort { needed: 16, got: 15 }));
    }

    #[test]
    fn quadratic_trend_integrates_twice() {
        let h: Vec<f64> = (0..40).map(|t| 0.5 * (t * t) as f64 + 2.0 * t as f64 + 1.0).collect();
        let cfg = FitConfig::arima_with_orders(vec![ArimaOrder::new(0, 2, 0)]);
        let m = fit_arima(&h, &cfg).unwrap();
        // Second differences are constant (= 1); with no intercept for d = 2
        // the forecast continues the last slope linearly.
        let f = m.forecast(3).unwrap();
        let last = h[39];
        let slope = h[39] - h[38];
        for (i, v) in f.iter().enumerate() {
            assert!((v - (last + (i + 1) as f64 * slope)).abs() < 1e-9);
        }
    }

    #[test]
    fn fitted_models_are_admissible_and_small() {
        let h = ar1(0.6, 200, 3);
        let m = fit_arima(&h, &FitConfig::arima()).unwrap();
        let o = m.orders.unwrap();
        let (p, d, q) = (o.p as usize, o.d as usize, o.q as usize);
        assert!(admissible(&m.params[..p], &m.params[p..p + q]));
        assert!(m.state.len() <= p.max(q + 1) + d + q);
    }

    #[test]
    fn ma_fit_improves_on_start() {
        let noise = ar1(0.0, 301, 11);
        let h: Vec<f64> = noise.windows(2).map(|w| w[1] + 0.6 * w[0]).collect();
        let w = h.clone();
        let init = hannan_rissanen(&w, 0, 1, true).unwrap();
        let start = css(&w, &init.phi, &init.theta, init.c).0;
        let fitted = fit_with_ma(&w, 0, 1, true, 10);
        let end = css(&w, &fitted.phi, &fitted.theta, fitted.c).0;
        assert!(end <= start);
        assert!((fitted.theta[0] - 0.6).abs() < 0.15);
    }

    #[test]
    fn root_modulus_cases() {
        assert_eq!(min_root_modulus(0.0, 0.0), f64::INFINITY);
        assert!((min_root_modulus(-0.5, 0.0) - 2.0).abs() < 1e-12);
        // 1 - z + 0.5 z² has complex roots of modulus √2.
        assert!((min_root_modulus(-1.0, 0.5) - 2f64.sqrt()).abs() < 1e-12);
        // (1 - 0.5z)(1 - 0.25z) = 1 - 0.75z + 0.125z²: roots 2 and 4.
        assert!((min_root_modulus(-0.75, 0.125) - 2.0).abs() < 1e-12);
    }
}

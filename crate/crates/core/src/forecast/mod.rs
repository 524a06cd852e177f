//! Forecasting methods, AICc model selection and multi-step forecasts.
//!
//! Five methods are available: Constant, Linear, Simple Mean, Exponential
//! Smoothing (simple or Holt's linear trend) and ARIMA(p, d, q) with
//! p, q ≤ 2 and d ≤ 2. Every fit is deterministic and produces an immutable
//! [`ForecastModel`] that carries everything needed to forecast, so the same
//! model can be shipped from a sensor to a gateway and evaluated identically
//! on both sides.

mod arima;
mod es;
mod linalg;
pub mod optim;
mod simple;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arima::{adf_statistic, choose_differencing, fit_arima, ADF_CRITICAL_5PCT};
pub use es::fit_es;
pub use simple::{fit_constant, fit_linear, fit_simple_mean};

/// Variances below `(VARIANCE_REL_FLOOR · max|x|)²` are treated as an exact
/// fit, so rounding noise cannot reorder models that fit equally well.
pub(crate) const VARIANCE_REL_FLOOR: f64 = 1e-12;

/// Largest optimizer budget accepted by [`FitConfig`].
pub const MAX_BUDGET: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Constant,
    Linear,
    SimpleMean,
    ExponentialSmoothing,
    Arima,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Constant,
        MethodKind::Linear,
        MethodKind::SimpleMean,
        MethodKind::ExponentialSmoothing,
        MethodKind::Arima,
    ];

    /// Byte tag used on the wire.
    pub fn tag(self) -> u8 {
        match self {
            MethodKind::Constant => 0,
            MethodKind::Linear => 1,
            MethodKind::SimpleMean => 2,
            MethodKind::ExponentialSmoothing => 3,
            MethodKind::Arima => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        MethodKind::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Constant => "constant",
            MethodKind::Linear => "linear",
            MethodKind::SimpleMean => "simple_mean",
            MethodKind::ExponentialSmoothing => "es",
            MethodKind::Arima => "arima",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" => Ok(MethodKind::Constant),
            "linear" => Ok(MethodKind::Linear),
            "simple_mean" | "sm" | "mean" => Ok(MethodKind::SimpleMean),
            "es" | "exponential_smoothing" => Ok(MethodKind::ExponentialSmoothing),
            "arima" => Ok(MethodKind::Arima),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// ARIMA order triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: u8,
    pub d: u8,
    pub q: u8,
}

impl ArimaOrder {
    pub const fn new(p: u8, d: u8, q: u8) -> Self {
        Self { p, d, q }
    }

    /// The full {0,1,2}³ grid, ordered by (d, p, q).
    pub fn full_grid() -> Vec<ArimaOrder> {
        let mut grid = Vec::with_capacity(27);
        for d in 0..=2 {
            for p in 0..=2 {
                for q in 0..=2 {
                    grid.push(ArimaOrder::new(p, d, q));
                }
            }
        }
        grid
    }

    /// `p << 4 | d << 2 | q`.
    pub fn pack(self) -> u8 {
        (self.p << 4) | (self.d << 2) | self.q
    }

    pub fn unpack(byte: u8) -> Self {
        Self {
            p: (byte >> 4) & 0b11,
            d: (byte >> 2) & 0b11,
            q: byte & 0b11,
        }
    }

    fn validate(self) -> Result<()> {
        if self.p > 2 || self.d > 2 || self.q > 2 {
            return Err(Error::invalid(format!(
                "ARIMA orders must lie in 0..=2, got ({},{},{})",
                self.p, self.d, self.q
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsVariant {
    /// Level only.
    Simple,
    /// Level plus linear trend.
    Holt,
}

/// How ARIMA picks its differencing order before the (p, q) search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferencingRule {
    /// Smallest d whose differenced series passes an augmented Dickey–Fuller
    /// test at the 5% level.
    #[default]
    UnitRoot,
    /// Smallest d for which differencing once more does not reduce the
    /// variance.
    VarianceReduction,
}

/// What to fit and how hard to try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: MethodKind,
    /// Allowed ARIMA orders; candidates are tried in this order.
    #[serde(default = "ArimaOrder::full_grid")]
    pub order_grid: Vec<ArimaOrder>,
    #[serde(default = "default_es_variants")]
    pub es_variants: Vec<EsVariant>,
    /// Fixed α candidates; disables the search and its clamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    /// Fixed β candidates for Holt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    /// Optimizer budget in 1..=10.
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub differencing: DifferencingRule,
}

fn default_es_variants() -> Vec<EsVariant> {
    vec![EsVariant::Simple, EsVariant::Holt]
}

fn default_budget() -> u32 {
    MAX_BUDGET
}

impl FitConfig {
    pub fn new(method: MethodKind) -> Self {
        Self {
            method,
            order_grid: ArimaOrder::full_grid(),
            es_variants: default_es_variants(),
            alpha_grid: None,
            beta_grid: None,
            budget: MAX_BUDGET,
            differencing: DifferencingRule::default(),
        }
    }

    pub fn constant() -> Self {
        Self::new(MethodKind::Constant)
    }

    pub fn linear() -> Self {
        Self::new(MethodKind::Linear)
    }

    pub fn simple_mean() -> Self {
        Self::new(MethodKind::SimpleMean)
    }

    pub fn es() -> Self {
        Self::new(MethodKind::ExponentialSmoothing)
    }

    pub fn arima() -> Self {
        Self::new(MethodKind::Arima)
    }

    pub fn arima_with_orders(orders: impl Into<Vec<ArimaOrder>>) -> Self {
        Self {
            order_grid: orders.into(),
            ..Self::arima()
        }
    }

    /// Shortest history [`fit`] accepts for this configuration.
    pub fn min_history(&self) -> usize {
        match self.method {
            MethodKind::Constant | MethodKind::SimpleMean => 1,
            MethodKind::Linear => 2,
            MethodKind::ExponentialSmoothing => es::MIN_HISTORY,
            MethodKind::Arima => arima::min_history(&self.order_grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.budget > MAX_BUDGET {
            return Err(Error::invalid(format!(
                "optimizer budget must be in 1..={MAX_BUDGET}, got {}",
                self.budget
            )));
        }
        match self.method {
            MethodKind::Arima => {
                if self.order_grid.is_empty() {
                    return Err(Error::invalid("ARIMA order grid is empty"));
                }
                self.order_grid.iter().try_for_each(|o| o.validate())?;
            }
            MethodKind::ExponentialSmoothing => {
                if self.es_variants.is_empty() {
                    return Err(Error::invalid("ES variant set is empty"));
                }
                for grid in [&self.alpha_grid, &self.beta_grid].into_iter().flatten() {
                    if grid.is_empty() {
                        return Err(Error::invalid("ES smoothing grid is empty"));
                    }
                    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                        return Err(Error::invalid(format!(
                            "smoothing parameter {v} outside (0, 1]"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A fitted forecasting model.
///
/// `params` follow the method: Constant `[last]`, Linear `[last, slope]`,
/// SimpleMean `[mean]`, ES `[α]` or `[α, β]`, ARIMA `[φ₁..φp, θ₁..θq, c]`.
/// `state` holds what the recursion needs beyond the parameters: ES level
/// (and trend); for ARIMA the last p differenced values, the last q
/// residuals and one integration anchor per differencing level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<ArimaOrder>,
    pub params: Vec<f64>,
    pub state: Vec<f64>,
    /// Parameter count used in AICc.
    pub k: usize,
    /// History length the model was fitted on (0 when decoded from the wire).
    pub fit_n: usize,
    /// In-sample AICc, when defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aicc: Option<f64>,
}

impl ForecastModel {
    /// Forecasts `window` steps ahead from the end of the fitted history.
    pub fn forecast(&self, window: usize) -> Result<Vec<f64>> {
        if window == 0 {
            return Err(Error::invalid("forecast window must be >= 1"));
        }
        match self.kind {
            MethodKind::Constant => Ok(vec![self.params[0]; window]),
            MethodKind::SimpleMean => Ok(vec![self.params[0]; window]),
            MethodKind::Linear => {
                let (last, slope) = (self.params[0], self.params[1]);
                Ok((1..=window).map(|i| last + i as f64 * slope).collect())
            }
            MethodKind::ExponentialSmoothing => Ok(es::forecast(self, window)),
            MethodKind::Arima => arima::forecast(self, window),
        }
    }

    /// All values needed to forecast: `params` followed by `state`.
    pub fn wire_values(&self) -> Vec<f64> {
        let mut v = self.params.clone();
        v.extend_from_slice(&self.state);
        v
    }

    /// Rebuilds a model from its kind, order byte and wire values.
    pub fn from_wire(kind: MethodKind, orders: Option<ArimaOrder>, values: Vec<f64>) -> Result<Self> {
        let bad = |want: &str| {
            Error::Protocol(format!(
                "{kind} model carries {} values, expected {want}",
                values.len()
            ))
        };
        let n_params = match kind {
            MethodKind::Constant | MethodKind::SimpleMean => {
                if values.len() != 1 {
                    return Err(bad("1"));
                }
                1
            }
            MethodKind::Linear => {
                if values.len() != 2 {
                    return Err(bad("2"));
                }
                2
            }
            MethodKind::ExponentialSmoothing => match values.len() {
                2 => 1,
                4 => 2,
                _ => return Err(bad("2 or 4")),
            },
            MethodKind::Arima => {
                let o = orders.ok_or_else(|| Error::Protocol("ARIMA model without orders".into()))?;
                o.validate()?;
                let (p, d, q) = (o.p as usize, o.d as usize, o.q as usize);
                if values.len() != (p + q + 1) + (p + q + d) {
                    return Err(bad(&format!("{}", 2 * (p + q) + 1 + d)));
                }
                p + q + 1
            }
        };
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Protocol(format!("non-finite model value {v}")));
        }
        let mut params = values;
        let state = params.split_off(n_params);
        let k = match kind {
            MethodKind::Constant | MethodKind::Linear => 1,
            MethodKind::SimpleMean => 2,
            MethodKind::ExponentialSmoothing => 2 * n_params,
            MethodKind::Arima => {
                let o = orders.unwrap_or(ArimaOrder::new(0, 0, 0));
                arima::param_count(o)
            }
        };
        Ok(Self {
            kind,
            orders: if kind == MethodKind::Arima { orders } else { None },
            params,
            state,
            k,
            fit_n: 0,
            aicc: None,
        })
    }
}

/// Forecasts `window` steps with `model`.
pub fn forecast(model: &ForecastModel, window: usize) -> Result<Vec<f64>> {
    model.forecast(window)
}

/// Small-sample corrected Akaike information criterion,
/// `-2 log L + 2k + 2k(k+1)/(n-k-1)`.
pub fn aicc(neg2_loglik: f64, k: usize, n: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(Error::invalid(format!(
            "AICc needs n > k + 1 (n = {n}, k = {k})"
        )));
    }
    let (k, n) = (k as f64, n as f64);
    Ok(neg2_loglik + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0))
}

/// `-2 log L` of `n` i.i.d. Gaussian errors at the ML variance `sse / n`,
/// with the variance floored relative to the data magnitude `scale`.
pub(crate) fn gaussian_neg2_loglik(sse: f64, n: usize, scale: f64) -> f64 {
    let n = n as f64;
    let floor = (VARIANCE_REL_FLOOR * scale.max(1.0)).powi(2);
    let var = (sse / n).max(floor);
    n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0)
}

/// AICc of a Gaussian error model, `None` when undefined.
pub(crate) fn gaussian_aicc(sse: f64, k: usize, n: usize, scale: f64) -> Option<f64> {
    if n == 0 || !sse.is_finite() {
        return None;
    }
    aicc(gaussian_neg2_loglik(sse, n, scale), k, n).ok()
}

/// Largest absolute value in `xs`.
pub(crate) fn scale_of(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Mean used by every method that needs one, so equal inputs give
/// bit-identical results across methods.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fits one configuration to `history`.
pub fn fit(history: &[f64], config: &FitConfig) -> Result<ForecastModel> {
    config.validate()?;
    if let Some(i) = history.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite history value at {i}")));
    }
    match config.method {
        MethodKind::Constant => fit_constant(history),
        MethodKind::Linear => fit_linear(history),
        MethodKind::SimpleMean => fit_simple_mean(history),
        MethodKind::ExponentialSmoothing => fit_es(history, config),
        MethodKind::Arima => fit_arima(history, config),
    }
}

/// Fits every candidate that accepts `history` and returns the one with the
/// lowest AICc. Ties go to fewer parameters, then to the earlier candidate.
/// Models without a defined AICc rank after all others.
pub fn select_model(history: &[f64], candidates: &[FitConfig]) -> Result<ForecastModel> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate configurations"));
    }
    let mut best: Option<(ForecastModel, usize)> = None;
    let mut failures = Vec::new();
    for (idx, cfg) in candidates.iter().enumerate() {
        let model = match fit(history, cfg) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("{}: {e}", cfg.method));
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some((incumbent, _)) => ranks_before(&model, incumbent),
        };
        if better {
            best = Some((model, idx));
        }
    }
    best.map(|(m, _)| m).ok_or_else(|| {
        Error::Fit(format!(
            "no candidate could be fitted to a history of {} values ({})",
            history.len(),
            failures.join("; ")
        ))
    })
}

/// Strictly better than `incumbent` under (AICc, k); equal keeps the
/// incumbent.
pub(crate) fn ranks_before(model: &ForecastModel, incumbent: &ForecastModel) -> bool {
    match (model.aicc, incumbent.aicc) {
        (Some(a), Some(b)) if a != b => a < b,
        (Some(_), None) => true,
        (None, Some(_)) => false,
        _ => model.k < incumbent.k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aicc_zero_terms() {
        assert_eq!(aicc(0.0, 0, 10).unwrap(), 0.0);
    }

    #[test]
    fn aicc_hand_value() {
        let v = aicc(20.0, 2, 20).unwrap();
        assert!((v - (24.0 + 12.0 / 17.0)).abs() < 1e-12);
        assert!((v - 24.70588).abs() < 1e-5);
    }

    #[test]
    fn aicc_tends_to_aic() {
        let v = aicc(5.0, 3, 1_000_000).unwrap();
        assert!((v - (5.0 + 6.0)).abs() < 1e-3);
    }

    #[test]
    fn aicc_rejects_small_n() {
        assert!(aicc(1.0, 3, 4).is_err());
        assert!(aicc(1.0, 3, 5).is_ok());
    }

    #[test]
    fn forecast_rejects_zero_window() {
        let m = fit_constant(&[1.0]).unwrap();
        assert!(forecast(&m, 0).is_err());
    }

    #[test]
    fn order_packing_round_trips() {
        for o in ArimaOrder::full_grid() {
            assert_eq!(ArimaOrder::unpack(o.pack()), o);
        }
        assert_eq!(ArimaOrder::new(2, 1, 2).pack(), 0b10_01_10);
    }

    #[test]
    fn method_names_parse() {
        for m in MethodKind::ALL {
            assert_eq!(m.name().parse::<MethodKind>().unwrap(), m);
            assert_eq!(MethodKind::from_tag(m.tag()), Some(m));
        }
        assert!("ann".parse::<MethodKind>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::arima();
        c.budget = 11;
        assert!(c.validate().is_err());
        assert!(FitConfig::arima_with_orders(vec![]).validate().is_err());
        assert!(FitConfig::arima_with_orders(vec![ArimaOrder::new(3, 0, 0)]).validate().is_err());
        let mut es = FitConfig::es();
        es.alpha_grid = Some(vec![1.5]);
        assert!(es.validate().is_err());
    }

    #[test]
    fn select_single_candidate_is_its_fit() {
        let h = [1.0, 3.0, 2.0, 5.0, 4.0];
        let m = select_model(&h, &[FitConfig::linear()]).unwrap();
        assert_eq!(m, fit_linear(&h).unwrap());
    }

    #[test]
    fn select_skips_inapplicable_candidates() {
        let h = [1.0, 2.0, 3.0];
        let m = select_model(&h, &[FitConfig::arima(), FitConfig::constant()]).unwrap();
        assert_eq!(m.kind, MethodKind::Constant);
        assert!(select_model(&h, &[FitConfig::arima()]).is_err());
        assert!(select_model(&h, &[]).is_err());
    }

    #[test]
    fn select_prefers_fewer_params_on_constant_series() {
        let h = vec![4.2; 60];
        let cands = [
            FitConfig::arima_with_orders(vec![ArimaOrder::new(2, 0, 2)]),
            FitConfig::arima_with_orders(vec![ArimaOrder::new(0, 0, 0)]),
        ];
        let m = select_model(&h, &cands).unwrap();
        assert_eq!(m.orders, Some(ArimaOrder::new(0, 0, 0)));
    }

    #[test]
    fn wire_values_round_trip() {
        let h: Vec<f64> = (0..80).map(|i| (i as f64 * 0.3).sin() * 5.0 + i as f64 * 0.1).collect();
        for cfg in [
            FitConfig::constant(),
            FitConfig::linear(),
            FitConfig::simple_mean(),
            FitConfig::es(),
            FitConfig::arima(),
        ] {
            let m = fit(&h, &cfg).unwrap();
            let back = ForecastModel::from_wire(m.kind, m.orders, m.wire_values()).unwrap();
            assert_eq!(back.params, m.params);
            assert_eq!(back.state, m.state);
            assert_eq!(back.forecast(7).unwrap(), m.forecast(7).unwrap());
        }
    }

    #[test]
    fn from_wire_checks_lengths() {
        assert!(ForecastModel::from_wire(MethodKind::Linear, None, vec![1.0]).is_err());
        assert!(ForecastModel::from_wire(MethodKind::ExponentialSmoothing, None, vec![0.5, 1.0, 2.0]).is_err());
        assert!(ForecastModel::from_wire(MethodKind::Arima, None, vec![0.0]).is_err());
        assert!(ForecastModel::from_wire(MethodKind::Constant, None, vec![f64::NAN]).is_err());
    }
}

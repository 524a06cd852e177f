//! C ABI over `wsn-forecast`.
//!
//! Every function returns a [`WsnStatus`]. On failure a message is kept per
//! thread and can be read with [`wsn_last_error_message`]. Models are opaque
//! handles owned by the caller and released with [`wsn_model_free`].
//! Panics never cross the boundary; they surface as `WSN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wsn_forecast::dps::{extra_update_transmissions, run_dps, DpsMessage};
use wsn_forecast::error::Error;
use wsn_forecast::eval::mape;
use wsn_forecast::forecast::{aicc, fit, FitConfig, ForecastModel, MethodKind};
use wsn_forecast::ring::RingNetwork;
use wsn_forecast::series::{quantize_value, TimeSeries};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TooShort = 3,
    FitFailed = 4,
    Protocol = 5,
    Data = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsnMethod {
    Constant = 0,
    Linear = 1,
    SimpleMean = 2,
    ExponentialSmoothing = 3,
    Arima = 4,
}

impl From<WsnMethod> for MethodKind {
    fn from(m: WsnMethod) -> Self {
        match m {
            WsnMethod::Constant => MethodKind::Constant,
            WsnMethod::Linear => MethodKind::Linear,
            WsnMethod::SimpleMean => MethodKind::SimpleMean,
            WsnMethod::ExponentialSmoothing => MethodKind::ExponentialSmoothing,
            WsnMethod::Arima => MethodKind::Arima,
        }
    }
}

impl From<MethodKind> for WsnMethod {
    fn from(m: MethodKind) -> Self {
        match m {
            MethodKind::Constant => WsnMethod::Constant,
            MethodKind::Linear => WsnMethod::Linear,
            MethodKind::SimpleMean => WsnMethod::SimpleMean,
            MethodKind::ExponentialSmoothing => WsnMethod::ExponentialSmoothing,
            MethodKind::Arima => WsnMethod::Arima,
        }
    }
}

/// Opaque fitted model.
pub struct WsnModel {
    inner: ForecastModel,
}

/// Counters from one dual-prediction run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WsnDpsSummary {
    pub steps: usize,
    /// Measurements sent after the bootstrap phase.
    pub measurements: usize,
    pub model_updates: usize,
    /// Model updates beyond the first one.
    pub extra_updates: usize,
    pub fallbacks: usize,
    pub wire_bytes: usize,
    /// Percentage of post-bootstrap steps without a transmission.
    pub saved_percent: f64,
    pub max_abs_error: f64,
}

struct Failure(WsnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => WsnStatus::InvalidArgument,
            Error::TooShort { .. } => WsnStatus::TooShort,
            Error::Fit(_) => WsnStatus::FitFailed,
            Error::Protocol(_) => WsnStatus::Protocol,
            Error::Parse { .. } | Error::Data(_) => WsnStatus::Data,
            Error::Io { .. } => WsnStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(WsnStatus::NullPointer, format!("{what} is null"))
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WsnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WsnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            WsnStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(model: *const WsnModel) -> Result<&'a ForecastModel, Failure> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed(model: ForecastModel) -> *mut WsnModel {
    Box::into_raw(Box::new(WsnModel { inner: model }))
}

/// Message from the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn wsn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wsn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fits `method` with its default configuration to `history[0..len]`.
///
/// # Safety
/// `history` must point to `len` doubles and `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_fit(
    history: *const f64,
    len: usize,
    method: WsnMethod,
    out_model: *mut *mut WsnModel,
) -> WsnStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        let xs = slice(history, len, "history")?;
        let model = fit(xs, &FitConfig::new(method.into()))?;
        out_model.write(boxed(model));
        Ok(())
    })
}

/// Fits with a JSON-encoded fit configuration, e.g.
/// `{"method":"arima","budget":3}`.
///
/// # Safety
/// `history` must point to `len` doubles, `config_json` must be a
/// NUL-terminated string and `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_fit_json(
    history: *const f64,
    len: usize,
    config_json: *const c_char,
    out_model: *mut *mut WsnModel,
) -> WsnStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Failure(WsnStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let config: FitConfig = serde_json::from_str(text)
            .map_err(|e| Failure(WsnStatus::InvalidArgument, format!("bad fit config: {e}")))?;
        let xs = slice(history, len, "history")?;
        let model = fit(xs, &config)?;
        out_model.write(boxed(model));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_free(model: *mut WsnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_method(model: *const WsnModel, out: *mut WsnMethod) -> WsnStatus {
    guard(|| {
        let m = model_ref(model)?;
        put(out, m.kind.into(), "out")
    })
}

/// In-sample AICc. Fails with `WSN_STATUS_INVALID_ARGUMENT` when the
/// model has none (too few points, or decoded from the wire).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_aicc(model: *const WsnModel, out: *mut f64) -> WsnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let v = m
            .aicc
            .ok_or_else(|| Failure(WsnStatus::InvalidArgument, "model has no AICc".into()))?;
        put(out, v, "out")
    })
}

/// Writes `window` forecasts into `out[0..window]`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_forecast(
    model: *const WsnModel,
    window: usize,
    out: *mut f64,
    out_len: usize,
) -> WsnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_len < window {
            return Err(Failure(
                WsnStatus::BufferTooSmall,
                format!("need {window} slots, got {out_len}"),
            ));
        }
        let dst = slice_mut(out, out_len, "out")?;
        let fc = m.forecast(window)?;
        dst[..window].copy_from_slice(&fc);
        Ok(())
    })
}

/// Encodes the model as a wire ModelUpdate with sequence number `seq`.
///
/// `*written` receives the encoded length. When `buf_len` is too small
/// nothing is copied, `*written` holds the required size and
/// `WSN_STATUS_BUFFER_TOO_SMALL` is returned; passing `buf = NULL` with
/// `buf_len = 0` is the way to query the size.
///
/// # Safety
/// `buf` must hold `buf_len` bytes and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_encode(
    model: *const WsnModel,
    seq: u32,
    buf: *mut u8,
    buf_len: usize,
    written: *mut usize,
) -> WsnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if written.is_null() {
            return Err(null("written"));
        }
        let bytes = DpsMessage::ModelUpdate {
            seq,
            model: m.clone(),
        }
        .encode()?;
        written.write(bytes.len());
        if buf_len < bytes.len() {
            return Err(Failure(
                WsnStatus::BufferTooSmall,
                format!("need {} bytes, got {buf_len}", bytes.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Decodes a wire ModelUpdate into a new model handle.
///
/// # Safety
/// `bytes` must hold `len` bytes; `out_seq` may be NULL; `out_model` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_model_decode(
    bytes: *const u8,
    len: usize,
    out_seq: *mut u32,
    out_model: *mut *mut WsnModel,
) -> WsnStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        if bytes.is_null() && len > 0 {
            return Err(null("bytes"));
        }
        let raw = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
        match DpsMessage::decode(raw)? {
            DpsMessage::ModelUpdate { seq, model } => {
                if !out_seq.is_null() {
                    out_seq.write(seq);
                }
                out_model.write(boxed(model));
                Ok(())
            }
            DpsMessage::Measurement { .. } => Err(Failure(
                WsnStatus::Protocol,
                "message is a measurement, not a model update".into(),
            )),
        }
    })
}

/// Runs the dual-prediction simulation over `values[0..len]`.
///
/// When `reconstructed` is not NULL it must hold `len` doubles and receives
/// the gateway-side series.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_run_dps(
    values: *const f64,
    len: usize,
    method: WsnMethod,
    history: usize,
    window: usize,
    delta: f64,
    reconstructed: *mut f64,
    summary: *mut WsnDpsSummary,
) -> WsnStatus {
    guard(|| {
        if summary.is_null() {
            return Err(null("summary"));
        }
        let xs = slice(values, len, "values")?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Failure(WsnStatus::InvalidArgument, format!("delta must be > 0, got {delta}")));
        }
        let series = TimeSeries::from_values(xs.to_vec(), "", delta)?;
        let trace = run_dps(&series, &FitConfig::new(method.into()), history, window, delta)?;
        if !reconstructed.is_null() {
            slice_mut(reconstructed, len, "reconstructed")?.copy_from_slice(trace.reconstructed.values());
        }
        let model_updates = trace.messages.iter().filter(|m| !m.is_measurement()).count();
        summary.write(WsnDpsSummary {
            steps: len,
            measurements: trace.post_bootstrap_measurements(),
            model_updates,
            extra_updates: extra_update_transmissions(&trace),
            fallbacks: trace.fallbacks.len(),
            wire_bytes: trace.wire_bytes,
            saved_percent: trace.saved_fraction,
            max_abs_error: trace.max_abs_error(xs),
        });
        Ok(())
    })
}

/// Rounds every value in place to the nearest multiple of `resolution`.
///
/// # Safety
/// `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wsn_quantize(values: *mut f64, len: usize, resolution: f64) -> WsnStatus {
    guard(|| {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Failure(
                WsnStatus::InvalidArgument,
                format!("resolution must be > 0, got {resolution}"),
            ));
        }
        for v in slice_mut(values, len, "values")? {
            *v = quantize_value(*v, resolution);
        }
        Ok(())
    })
}

/// Mean absolute percentage error; terms with a zero actual are skipped and
/// counted in `*out_skipped` (may be NULL).
///
/// # Safety
/// `actual` and `predicted` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_mape(
    actual: *const f64,
    predicted: *const f64,
    len: usize,
    out: *mut f64,
    out_skipped: *mut usize,
) -> WsnStatus {
    guard(|| {
        let a = slice(actual, len, "actual")?;
        let p = slice(predicted, len, "predicted")?;
        let (m, skipped) = mape(a, p)?;
        if !out_skipped.is_null() {
            out_skipped.write(skipped);
        }
        put(out, m, "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_aicc(neg2_loglik: f64, k: usize, n: usize, out: *mut f64) -> WsnStatus {
    guard(|| put(out, aicc(neg2_loglik, k, n)?, "out"))
}

/// Node count of a ring network with `c` neighbours per node and `d` rings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_ring_total_nodes(c: u64, d: u64, out: *mut u64) -> WsnStatus {
    guard(|| put(out, RingNetwork::new(c, d)?.total_nodes(), "out"))
}

/// Hop-by-hop transmissions for one round of readings to reach the sink.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_ring_total_transmissions(c: u64, d: u64, out: *mut u64) -> WsnStatus {
    guard(|| put(out, RingNetwork::new(c, d)?.total_transmissions(), "out"))
}

/// Transmissions avoided per round when every node saves `percent`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wsn_ring_network_savings(c: u64, d: u64, percent: f64, out: *mut u64) -> WsnStatus {
    guard(|| put(out, RingNetwork::new(c, d)?.network_savings(percent)?, "out"))
}

//! Dual prediction scheme: a sensor node and a gateway run the same model.
//!
//! The sensor transmits its first `H` measurements raw, fits a model on them
//! and ships it together with the last bootstrap measurement. From then on
//! both sides forecast each step locally; the sensor only transmits a
//! measurement when its forecast misses by `delta_min` or more, and ships a
//! refitted model at the end of every window of `W` steps. With the Constant
//! method a transmitted measurement immediately becomes the new forecast and
//! no model is ever shipped.
//!
//! Window forecasts are the static multi-step forecasts computed when the
//! model is installed; corrections replace the gateway's reported value but
//! do not re-condition the model.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{fit, fit_constant, ArimaOrder, FitConfig, ForecastModel, MethodKind};
use crate::series::TimeSeries;

const TAG_MODEL_UPDATE: u8 = 1;
const TAG_MEASUREMENT: u8 = 2;

/// Wire unit between a sensor node and the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DpsMessage {
    ModelUpdate { seq: u32, model: ForecastModel },
    Measurement { seq: u32, index: u32, value: f64 },
}

impl DpsMessage {
    pub fn seq(&self) -> u32 {
        match self {
            DpsMessage::ModelUpdate { seq, .. } | DpsMessage::Measurement { seq, .. } => *seq,
        }
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self, DpsMessage::Measurement { .. })
    }

    /// Little-endian byte layout.
    ///
    /// ```text
    /// ModelUpdate: 0x01 | seq u32 | kind u8 | orders u8 (p<<4|d<<2|q) | count u16 | count × f64
    /// Measurement: 0x02 | seq u32 | index u32 | value f64
    /// ```
    pub fn encode(&self) -> Result<Vec<u8>> {
        match self {
            DpsMessage::ModelUpdate { seq, model } => {
                let values = model.wire_values();
                let count = u16::try_from(values.len())
                    .map_err(|_| Error::Protocol("model has too many values for the wire".into()))?;
                let mut out = Vec::with_capacity(9 + 8 * values.len());
                out.push(TAG_MODEL_UPDATE);
                out.extend_from_slice(&seq.to_le_bytes());
                out.push(model.kind.tag());
                out.push(model.orders.map_or(0, ArimaOrder::pack));
                out.extend_from_slice(&count.to_le_bytes());
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Ok(out)
            }
            DpsMessage::Measurement { seq, index, value } => {
                let mut out = Vec::with_capacity(17);
                out.push(TAG_MEASUREMENT);
                out.extend_from_slice(&seq.to_le_bytes());
                out.extend_from_slice(&index.to_le_bytes());
                out.extend_from_slice(&value.to_le_bytes());
                Ok(out)
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let msg = match r.u8()? {
            TAG_MODEL_UPDATE => {
                let seq = r.u32()?;
                let tag = r.u8()?;
                let kind = MethodKind::from_tag(tag)
                    .ok_or_else(|| Error::Protocol(format!("unknown model kind {tag}")))?;
                let packed = r.u8()?;
                let count = r.u16()? as usize;
                let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                let orders = (kind == MethodKind::Arima).then(|| ArimaOrder::unpack(packed));
                let model = ForecastModel::from_wire(kind, orders, values)?;
                DpsMessage::ModelUpdate { seq, model }
            }
            TAG_MEASUREMENT => DpsMessage::Measurement {
                seq: r.u32()?,
                index: r.u32()?,
                value: r.f64()?,
            },
            other => return Err(Error::Protocol(format!("unknown message tag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after message",
                bytes.len() - r.pos
            )));
        }
        Ok(msg)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Protocol("truncated message".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn index_u32(t: usize) -> Result<u32> {
    u32::try_from(t).map_err(|_| Error::Protocol(format!("time index {t} exceeds u32")))
}

/// Sensor-side state machine.
#[derive(Debug, Clone)]
pub struct SensorState {
    config: FitConfig,
    history: usize,
    window: usize,
    delta_min: f64,
    rebase: bool,
    buffer: VecDeque<f64>,
    model: Option<ForecastModel>,
    forecasts: Vec<f64>,
    window_pos: usize,
    t: usize,
    seq: u32,
    tx_measurements: usize,
    tx_updates: usize,
    fallbacks: Vec<usize>,
}

impl SensorState {
    pub fn new(config: FitConfig, history: usize, window: usize, delta_min: f64) -> Result<Self> {
        config.validate()?;
        if history == 0 || window == 0 {
            return Err(Error::invalid("history and window must be >= 1"));
        }
        if !(delta_min > 0.0) {
            return Err(Error::invalid(format!("delta_min must be positive, got {delta_min}")));
        }
        let rebase = config.method == MethodKind::Constant;
        Ok(Self {
            config,
            history,
            window,
            delta_min,
            rebase,
            buffer: VecDeque::with_capacity(history),
            model: None,
            forecasts: Vec::new(),
            window_pos: 0,
            t: 0,
            seq: 0,
            tx_measurements: 0,
            tx_updates: 0,
            fallbacks: Vec::new(),
        })
    }

    pub fn is_bootstrapping(&self) -> bool {
        self.model.is_none()
    }

    pub fn window_pos(&self) -> usize {
        self.window_pos
    }

    pub fn model(&self) -> Option<&ForecastModel> {
        self.model.as_ref()
    }

    /// Forecast the sensor will compare the next measurement against.
    pub fn current_forecast(&self) -> Option<f64> {
        self.model.as_ref().map(|_| self.forecasts[self.window_pos])
    }

    pub fn measurements_sent(&self) -> usize {
        self.tx_measurements
    }

    pub fn updates_sent(&self) -> usize {
        self.tx_updates
    }

    /// Time indices at which a refit failed and Constant was used instead.
    pub fn fallbacks(&self) -> &[usize] {
        &self.fallbacks
    }

    fn next_seq(&mut self) -> u32 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn measurement(&mut self, value: f64) -> Result<DpsMessage> {
        self.tx_measurements += 1;
        Ok(DpsMessage::Measurement {
            seq: self.next_seq(),
            index: index_u32(self.t)?,
            value,
        })
    }

    fn refit(&mut self) -> Result<ForecastModel> {
        let hist: Vec<f64> = self.buffer.iter().copied().collect();
        match fit(&hist, &self.config) {
            Ok(m) => Ok(m),
            Err(e) => {
                log::debug!("refit at t={} failed ({e}), using Constant", self.t);
                self.fallbacks.push(self.t);
                fit_constant(&hist)
            }
        }
    }

    fn install(&mut self, model: ForecastModel) -> Result<()> {
        self.forecasts = model.forecast(self.window)?;
        self.model = Some(model);
        self.window_pos = 0;
        Ok(())
    }

    /// Processes one measurement and returns what goes on the air: at most
    /// one Measurement followed by at most one ModelUpdate.
    pub fn sensor_step(&mut self, x: f64) -> Result<Vec<DpsMessage>> {
        let mut out = Vec::with_capacity(2);

        if self.model.is_none() {
            out.push(self.measurement(x)?);
            self.push_buffer(x);
            if self.buffer.len() == self.history {
                let model = if self.rebase { fit_constant(&[x])? } else { self.refit()? };
                self.install(model.clone())?;
                if !self.rebase {
                    self.tx_updates += 1;
                    out.push(DpsMessage::ModelUpdate {
                        seq: self.next_seq(),
                        model,
                    });
                }
            }
            self.t += 1;
            return Ok(out);
        }

        let forecast = self.forecasts[self.window_pos];
        let transmitted = (forecast - x).abs() >= self.delta_min;
        if transmitted {
            out.push(self.measurement(x)?);
            if self.rebase {
                let pos = self.window_pos;
                self.forecasts[pos..].fill(x);
                self.forecasts[..pos].fill(x);
                self.model = Some(fit_constant(&[x])?);
            }
        }
        self.push_buffer(x);
        self.window_pos += 1;
        if self.window_pos == self.window {
            if self.rebase {
                self.window_pos = 0;
            } else {
                let model = self.refit()?;
                self.install(model.clone())?;
                self.tx_updates += 1;
                out.push(DpsMessage::ModelUpdate {
                    seq: self.next_seq(),
                    model,
                });
            }
        }
        self.t += 1;
        Ok(out)
    }

    fn push_buffer(&mut self, x: f64) {
        if self.buffer.len() == self.history {
            self.buffer.pop_front();
        }
        self.buffer.push_back(x);
    }
}

/// Gateway-side state machine.
#[derive(Debug, Clone)]
pub struct GatewayState {
    window: usize,
    rebase: bool,
    model: Option<ForecastModel>,
    forecasts: Vec<f64>,
    window_pos: usize,
    window_start: usize,
    t: usize,
    last_seq: Option<u32>,
    reconstructed: Vec<f64>,
}

impl GatewayState {
    /// `method` must match the sensor's configured method.
    pub fn new(method: MethodKind, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("window must be >= 1"));
        }
        Ok(Self {
            window,
            rebase: method == MethodKind::Constant,
            model: None,
            forecasts: Vec::new(),
            window_pos: 0,
            window_start: 0,
            t: 0,
            last_seq: None,
            reconstructed: Vec::new(),
        })
    }

    pub fn reconstructed(&self) -> &[f64] {
        &self.reconstructed
    }

    pub fn model(&self) -> Option<&ForecastModel> {
        self.model.as_ref()
    }

    /// Forecast for the step about to be processed, once a model exists.
    pub fn current_forecast(&self) -> Option<f64> {
        self.model.as_ref().map(|_| self.forecasts[self.window_pos])
    }

    fn check_seq(&mut self, seq: u32) -> Result<()> {
        if let Some(last) = self.last_seq {
            if seq <= last {
                return Err(Error::Protocol(format!(
                    "sequence number {seq} does not follow {last}"
                )));
            }
        }
        self.last_seq = Some(seq);
        Ok(())
    }

    /// Processes everything the sensor sent during one step and returns the
    /// value reconstructed for that step. A ModelUpdate takes effect from the
    /// next step.
    pub fn gateway_step(&mut self, messages: &[DpsMessage]) -> Result<f64> {
        let mut value = None;
        let mut update = None;
        for msg in messages {
            self.check_seq(msg.seq())?;
            match msg {
                DpsMessage::Measurement { index, value: v, .. } => {
                    let index = *index as usize;
                    let span = if self.model.is_some() { self.window } else { usize::MAX };
                    if index < self.window_start || index - self.window_start >= span {
                        return Err(Error::Protocol(format!(
                            "measurement index {index} outside current window starting at {}",
                            self.window_start
                        )));
                    }
                    if index != self.t {
                        return Err(Error::Protocol(format!(
                            "measurement index {index} received at step {}",
                            self.t
                        )));
                    }
                    value = Some(*v);
                }
                DpsMessage::ModelUpdate { model, .. } => update = Some(model.clone()),
            }
        }

        let reconstructed = match (value, &self.model) {
            (Some(v), _) => {
                if self.rebase && self.model.is_some() {
                    self.forecasts.fill(v);
                }
                v
            }
            (None, Some(_)) => self.forecasts[self.window_pos],
            (None, None) => {
                return Err(Error::Protocol(format!(
                    "no measurement and no model at step {}",
                    self.t
                )))
            }
        };
        self.reconstructed.push(reconstructed);

        if self.model.is_some() {
            self.window_pos += 1;
            if self.window_pos == self.window {
                self.window_pos = 0;
                if self.rebase {
                    self.window_start = self.t + 1;
                }
            }
        }
        if let Some(model) = update {
            self.forecasts = model.forecast(self.window)?;
            self.model = Some(model);
            self.window_pos = 0;
            self.window_start = self.t + 1;
        }
        self.t += 1;
        Ok(reconstructed)
    }

    /// Installs the Constant base after the bootstrap of a Constant run,
    /// where no ModelUpdate is exchanged.
    pub fn finish_bootstrap(&mut self) -> Result<()> {
        if !self.rebase || self.model.is_some() {
            return Ok(());
        }
        let last = *self
            .reconstructed
            .last()
            .ok_or_else(|| Error::Protocol("bootstrap ended before any measurement".into()))?;
        let model = fit_constant(&[last])?;
        self.forecasts = model.forecast(self.window)?;
        self.model = Some(model);
        self.window_pos = 0;
        self.window_start = self.t;
        Ok(())
    }
}

/// Outcome of a lockstep sensor/gateway run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpsTrace {
    pub method: MethodKind,
    pub history: usize,
    pub window: usize,
    pub delta_min: f64,
    pub reconstructed: TimeSeries,
    /// Every delivered message, in order.
    pub messages: Vec<DpsMessage>,
    /// Whether a measurement was sent at each step.
    pub transmitted: Vec<bool>,
    /// Sensor and gateway forecasts per step (`None` during bootstrap).
    pub sensor_forecasts: Vec<Option<f64>>,
    pub gateway_forecasts: Vec<Option<f64>>,
    /// Measurements sent in each post-bootstrap window.
    pub per_window_tx: Vec<usize>,
    /// Percentage of post-bootstrap steps without a transmission.
    pub saved_fraction: f64,
    /// Time indices where a refit failed and Constant was shipped instead.
    pub fallbacks: Vec<usize>,
    /// Total encoded bytes put on the channel.
    pub wire_bytes: usize,
}

impl DpsTrace {
    pub fn bootstrap_len(&self) -> usize {
        self.history
    }

    pub fn post_bootstrap_measurements(&self) -> usize {
        self.transmitted[self.history..].iter().filter(|t| **t).count()
    }

    /// Largest |reconstructed − actual| over all steps.
    pub fn max_abs_error(&self, actual: &[f64]) -> f64 {
        self.reconstructed
            .values()
            .iter()
            .zip(actual)
            .map(|(r, a)| (r - a).abs())
            .fold(0.0, f64::max)
    }

    /// One JSON object per step.
    pub fn write_jsonl<W: Write>(&self, actual: &[f64], mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Step {
            t: usize,
            timestamp: f64,
            actual: f64,
            reconstructed: f64,
            forecast: Option<f64>,
            transmitted: bool,
        }
        for (t, ((&ts, &rec), &tx)) in self
            .reconstructed
            .timestamps()
            .iter()
            .zip(self.reconstructed.values())
            .zip(&self.transmitted)
            .enumerate()
        {
            let step = Step {
                t,
                timestamp: ts,
                actual: actual[t],
                reconstructed: rec,
                forecast: self.gateway_forecasts[t],
                transmitted: tx,
            };
            serde_json::to_writer(&mut out, &step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs sensor and gateway in lockstep over a lossless, ordered channel.
/// Every message is encoded and decoded on the way.
pub fn run_dps(
    series: &TimeSeries,
    method: &FitConfig,
    history: usize,
    window: usize,
    delta_min: f64,
) -> Result<DpsTrace> {
    let n = series.len();
    if n < history + window {
        return Err(Error::TooShort {
            needed: history + window,
            got: n,
        });
    }
    let mut sensor = SensorState::new(method.clone(), history, window, delta_min)?;
    let mut gateway = GatewayState::new(method.method, window)?;

    let mut messages = Vec::new();
    let mut transmitted = Vec::with_capacity(n);
    let mut sensor_forecasts = Vec::with_capacity(n);
    let mut gateway_forecasts = Vec::with_capacity(n);
    let mut per_window_tx = Vec::new();
    let mut wire_bytes = 0;
    let mut steps_in_window = 0;

    for (t, &x) in series.values().iter().enumerate() {
        if t == history {
            gateway.finish_bootstrap()?;
        }
        let sensor_fc = sensor.current_forecast();
        let gateway_fc = gateway.current_forecast();
        if sensor_fc.map(f64::to_bits) != gateway_fc.map(f64::to_bits) {
            return Err(Error::Protocol(format!(
                "sensor forecast {sensor_fc:?} and gateway forecast {gateway_fc:?} disagree at step {t}"
            )));
        }
        sensor_forecasts.push(sensor_fc);
        gateway_forecasts.push(gateway_fc);

        let mut sent = sensor.sensor_step(x)?;
        if t + 1 == n {
            // No window follows the final step, so its refit is never sent.
            sent.retain(DpsMessage::is_measurement);
        }
        let mut delivered = Vec::with_capacity(sent.len());
        for msg in &sent {
            let bytes = msg.encode()?;
            wire_bytes += bytes.len();
            delivered.push(DpsMessage::decode(&bytes)?);
        }
        let measured = delivered.iter().any(DpsMessage::is_measurement);
        gateway.gateway_step(&delivered)?;
        transmitted.push(measured);
        messages.extend(delivered);

        if t >= history {
            if steps_in_window == 0 {
                per_window_tx.push(0);
            }
            if measured {
                *per_window_tx.last_mut().expect("window opened") += 1;
            }
            steps_in_window = (steps_in_window + 1) % window;
        }
    }

    let post_steps = n - history;
    let post_tx = transmitted[history..].iter().filter(|t| **t).count();
    let reconstructed = TimeSeries::new(
        series.timestamps().to_vec(),
        gateway.reconstructed().to_vec(),
        series.unit(),
        series.resolution(),
    )?;

    Ok(DpsTrace {
        method: method.method,
        history,
        window,
        delta_min,
        reconstructed,
        messages,
        transmitted,
        sensor_forecasts,
        gateway_forecasts,
        per_window_tx,
        saved_fraction: 100.0 * (post_steps - post_tx) as f64 / post_steps as f64,
        fallbacks: sensor.fallbacks().to_vec(),
        wire_bytes,
    })
}

/// Number of ModelUpdate messages in the trace (0 for Constant).
pub fn count_model_overhead(trace: &DpsTrace) -> usize {
    trace
        .messages
        .iter()
        .filter(|m| matches!(m, DpsMessage::ModelUpdate { .. }))
        .count()
}

/// ModelUpdates that need a transmission of their own: all but the first,
/// which rides on the last bootstrap measurement.
pub fn extra_update_transmissions(trace: &DpsTrace) -> usize {
    count_model_overhead(trace).saturating_sub(1)
}

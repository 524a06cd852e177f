//! Split-based evaluation: forecast accuracy (MAPE), avoided transmissions,
//! paired comparison against the Constant baseline, resolution calibration
//! and report files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DatasetDescriptor;
use crate::error::{Error, Result};
use crate::forecast::{fit, fit_constant, FitConfig, MethodKind};
use crate::series::{extract_splits, TimeSeries};

pub const HISTORY_GRID: [usize; 8] = [5, 10, 20, 50, 100, 200, 500, 1000];
pub const WINDOW_GRID: [usize; 9] = [1, 5, 10, 20, 50, 100, 200, 500, 1000];
pub const DEFAULT_SPLITS: usize = 200;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
/// Minimum extra avoided transmissions per window for a method to be worth
/// its model updates.
pub const FAIRNESS_MARGIN: f64 = 2.0;

const ZERO_DENOMINATOR: f64 = 1e-12;

/// Mean absolute percentage error over terms with a nonzero actual value.
/// Returns the MAPE and the number of skipped terms.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<(f64, usize)> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::invalid(format!(
            "MAPE needs equal non-empty inputs, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (&a, &p) in actual.iter().zip(predicted) {
        if a.abs() > ZERO_DENOMINATOR {
            sum += (100.0 * (a - p) / a).abs();
            used += 1;
        }
    }
    let skipped = actual.len() - used;
    if used == 0 {
        return Err(Error::Data("MAPE undefined: every actual value is zero".into()));
    }
    Ok((sum / used as f64, skipped))
}

/// Steps of a window whose forecast lands strictly within `delta` of the
/// measurement. With `rebase`, a missed step's measurement becomes the
/// forecast for the rest of the window (the Constant method under DPS).
pub fn avoided_transmissions(forecasts: &[f64], actual: &[f64], delta: f64, rebase: bool) -> usize {
    let mut avoided = 0;
    let mut base: Option<f64> = None;
    for (&f, &a) in forecasts.iter().zip(actual) {
        let f = base.unwrap_or(f);
        if (f - a).abs() < delta {
            avoided += 1;
        } else if rebase {
            base = Some(a);
        }
    }
    avoided
}

/// One (dataset, method, H, W) configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub descriptor: DatasetDescriptor,
    pub method: FitConfig,
    pub history: usize,
    pub window: usize,
    pub n_splits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub origin: usize,
    /// `None` when every actual value in the window is zero.
    pub mape: Option<f64>,
    pub skipped_terms: usize,
    pub avoided: usize,
    /// The method failed to fit and Constant was used instead.
    pub fallback: bool,
}

/// One line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: String,
    pub group: u8,
    pub method: String,
    #[serde(rename = "H")]
    pub history: usize,
    #[serde(rename = "W")]
    pub window: usize,
    pub mape_mean: Option<f64>,
    pub mape_std: Option<f64>,
    /// Half-width of the 95% confidence interval of `mape_mean`.
    pub ci95: Option<f64>,
    pub avoided_mean: f64,
    /// Percentage of window steps without a transmission.
    pub saved_pct: f64,
    /// ModelUpdate messages needed to serve all evaluated windows.
    pub model_updates: usize,
    /// Whether the method avoids at least two transmissions per window more
    /// than Constant on the same splits; empty for Constant itself.
    pub fairness: Option<bool>,
    pub skipped_terms: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub row: ReportRow,
    pub splits: Vec<SplitOutcome>,
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((m, sd))
}

/// Fits on each split's history, forecasts its window and aggregates.
pub fn run_scenario(scenario: &Scenario, series: &TimeSeries) -> Result<ScenarioResult> {
    let cfg = &scenario.method;
    cfg.validate()?;
    if scenario.n_splits == 0 {
        return Err(Error::invalid("n_splits must be >= 1"));
    }
    let needed = cfg.min_history();
    if scenario.history < needed {
        return Err(Error::TooShort {
            needed,
            got: scenario.history,
        });
    }
    let delta = scenario.descriptor.delta_min;
    let rebase = cfg.method == MethodKind::Constant;
    let splits = extract_splits(series, scenario.history, scenario.window, scenario.n_splits, scenario.seed)?;

    let mut outcomes = Vec::with_capacity(splits.len());
    for split in &splits {
        let (model, fallback) = match fit(split.history, cfg) {
            Ok(m) => (m, false),
            Err(e) => {
                log::debug!("split at {}: {e}; using Constant", split.origin_index);
                (fit_constant(split.history)?, true)
            }
        };
        let forecasts = model.forecast(scenario.window)?;
        let (m, skipped) = match mape(split.window, &forecasts) {
            Ok((m, s)) => (Some(m), s),
            Err(_) => (None, split.window.len()),
        };
        outcomes.push(SplitOutcome {
            origin: split.origin_index,
            mape: m,
            skipped_terms: skipped,
            avoided: avoided_transmissions(&forecasts, split.window, delta, rebase),
            fallback,
        });
    }

    let mapes: Vec<f64> = outcomes.iter().filter_map(|o| o.mape).collect();
    let stats = mean_std(&mapes);
    let avoided: Vec<f64> = outcomes.iter().map(|o| o.avoided as f64).collect();
    let avoided_mean = avoided.iter().sum::<f64>() / avoided.len() as f64;
    let row = ReportRow {
        family: scenario.descriptor.family.name().to_string(),
        group: scenario.descriptor.group,
        method: cfg.method.name().to_string(),
        history: scenario.history,
        window: scenario.window,
        mape_mean: stats.map(|s| s.0),
        mape_std: stats.map(|s| s.1),
        ci95: stats.map(|s| Z95 * s.1 / (mapes.len() as f64).sqrt()),
        avoided_mean,
        saved_pct: 100.0 * avoided_mean / scenario.window as f64,
        model_updates: if rebase { 0 } else { outcomes.len() },
        fairness: None,
        skipped_terms: outcomes.iter().map(|o| o.skipped_terms).sum(),
    };
    Ok(ScenarioResult { row, splits: outcomes })
}

/// True iff the candidate avoids at least two more transmissions per window
/// than Constant, on average.
pub fn fairness_filter(candidate: &ReportRow, constant: &ReportRow) -> bool {
    candidate.avoided_mean - constant.avoided_mean >= FAIRNESS_MARGIN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Favors {
    Candidate,
    Baseline,
    Neither,
}

/// Paired comparison of per-split MAPEs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Mean of baseline − candidate; positive favours the candidate.
    pub mean_difference: f64,
    pub half_width: f64,
    pub n: usize,
    pub significant: bool,
    pub favors: Favors,
}

/// Normal-approximation 95% interval for the mean of paired differences
/// (baseline − candidate).
pub fn paired_comparison(differences: &[f64]) -> Result<Comparison> {
    let (m, sd) = match mean_std(differences) {
        Some(s) if differences.len() >= 2 => s,
        _ => return Err(Error::invalid("paired comparison needs at least two differences")),
    };
    let half_width = Z95 * sd / (differences.len() as f64).sqrt();
    let significant = m - half_width > 0.0 || m + half_width < 0.0;
    let favors = match (significant, m > 0.0) {
        (false, _) => Favors::Neither,
        (true, true) => Favors::Candidate,
        (true, false) => Favors::Baseline,
    };
    Ok(Comparison {
        mean_difference: m,
        half_width,
        n: differences.len(),
        significant,
        favors,
    })
}

/// Compares a method against the baseline on identical splits. Splits where
/// either MAPE is undefined are left out.
pub fn compare_to_baseline(candidate: &[SplitOutcome], baseline: &[SplitOutcome]) -> Result<Comparison> {
    if candidate.len() != baseline.len() || candidate.iter().zip(baseline).any(|(c, b)| c.origin != b.origin) {
        return Err(Error::invalid("candidate and baseline were evaluated on different splits"));
    }
    let diffs: Vec<f64> = candidate
        .iter()
        .zip(baseline)
        .filter_map(|(c, b)| Some(b.mape? - c.mape?))
        .collect();
    paired_comparison(&diffs)
}

/// Fraction of consecutive pairs that become equal after quantizing to `r`.
pub fn equal_pair_fraction(values: &[f64], r: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let steps: Vec<f64> = values.iter().map(|v| (v / r).round()).collect();
    let equal = steps.windows(2).filter(|w| w[0] == w[1]).count();
    equal as f64 / (values.len() - 1) as f64
}

pub const CALIBRATION_GRID_POINTS: usize = 1024;

/// Geometric grid of `CALIBRATION_GRID_POINTS` values from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (CALIBRATION_GRID_POINTS - 1) as f64;
    (0..CALIBRATION_GRID_POINTS)
        .map(|i| if i + 1 == CALIBRATION_GRID_POINTS { hi } else { lo * (ratio * i as f64).exp() })
        .collect()
}

/// Smallest resolution on a geometric grid at which at least `target` of the
/// consecutive pairs quantize to equal values.
///
/// The first grid spans the smallest to the largest positive consecutive
/// difference. When nothing there reaches the target, a second grid from the
/// largest difference up to `2·max|x| + max diff`, where every value rounds
/// to zero, is scanned.
pub fn calibrate_resolution(series: &TimeSeries, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target must be in (0, 1), got {target}")));
    }
    let xs = series.values();
    if xs.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: xs.len() });
    }
    let diffs: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|d| *d > 0.0).collect();
    let (Some(min), Some(max)) = (
        diffs.iter().copied().reduce(f64::min),
        diffs.iter().copied().reduce(f64::max),
    ) else {
        return Err(Error::Data("series is constant; every resolution qualifies".into()));
    };
    if let Some(r) = geometric_grid(min, max).into_iter().find(|&r| equal_pair_fraction(xs, r) >= target) {
        return Ok(r);
    }
    let top = 2.0 * xs.iter().fold(0.0f64, |m, x| m.max(x.abs())) + max;
    geometric_grid(max, top)
        .into_iter()
        .find(|&r| equal_pair_fraction(xs, r) >= target)
        .ok_or_else(|| Error::Data("no resolution on the grid reaches the target".into()))
}

/// Seed used for the splits of one (H, W) cell, shared by every method so
/// comparisons are paired.
pub fn cell_seed(base: u64, history: usize, window: usize) -> u64 {
    let mut z = base ^ ((history as u64) << 32) ^ window as u64;
    // splitmix64 finaliser
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates every method on every (H, W) cell that fits the series, in
/// parallel on the current rayon pool. Cells too long for the series or too
/// short for a method are skipped. Rows come back in (H, W, method) order
/// with fairness filled in against Constant when Constant is among `methods`.
pub fn run_grid(
    series: &TimeSeries,
    descriptor: &DatasetDescriptor,
    methods: &[FitConfig],
    histories: &[usize],
    windows: &[usize],
    n_splits: usize,
    seed: u64,
) -> Result<Vec<ScenarioResult>> {
    let mut scenarios = Vec::new();
    for &h in histories {
        for &w in windows {
            if h + w > series.len() {
                log::info!("skipping H={h} W={w}: series has {} values", series.len());
                continue;
            }
            for m in methods {
                if h < m.min_history() {
                    log::info!("skipping {} at H={h}: needs {} values", m.method, m.min_history());
                    continue;
                }
                scenarios.push(Scenario {
                    descriptor: *descriptor,
                    method: m.clone(),
                    history: h,
                    window: w,
                    n_splits,
                    seed: cell_seed(seed, h, w),
                });
            }
        }
    }

    let mut results = scenarios
        .par_iter()
        .map(|s| run_scenario(s, series))
        .collect::<Result<Vec<_>>>()?;

    let constants: Vec<ReportRow> = results
        .iter()
        .filter(|r| r.row.method == MethodKind::Constant.name())
        .map(|r| r.row.clone())
        .collect();
    for r in &mut results {
        if r.row.method == MethodKind::Constant.name() {
            continue;
        }
        if let Some(c) = constants
            .iter()
            .find(|c| c.history == r.row.history && c.window == r.row.window)
        {
            r.row.fairness = Some(fairness_filter(&r.row, c));
        }
    }
    Ok(results)
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    tool_version: String,
    manifest_hash: String,
    rows: Vec<ReportRow>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    family: String,
    group: u8,
    method: String,
    #[serde(rename = "H")]
    history: usize,
    #[serde(rename = "W")]
    window: usize,
    mape_mean: Option<f64>,
    mape_std: Option<f64>,
    ci95: Option<f64>,
    avoided_mean: f64,
    saved_pct: f64,
    model_updates: usize,
    fairness: Option<bool>,
    skipped_terms: usize,
    manifest_hash: String,
}

impl CsvRow {
    fn new(r: &ReportRow, hash: &str) -> Self {
        Self {
            family: r.family.clone(),
            group: r.group,
            method: r.method.clone(),
            history: r.history,
            window: r.window,
            mape_mean: r.mape_mean,
            mape_std: r.mape_std,
            ci95: r.ci95,
            avoided_mean: r.avoided_mean,
            saved_pct: r.saved_pct,
            model_updates: r.model_updates,
            fairness: r.fairness,
            skipped_terms: r.skipped_terms,
            manifest_hash: hash.to_string(),
        }
    }

    fn into_row(self) -> ReportRow {
        ReportRow {
            family: self.family,
            group: self.group,
            method: self.method,
            history: self.history,
            window: self.window,
            mape_mean: self.mape_mean,
            mape_std: self.mape_std,
            ci95: self.ci95,
            avoided_mean: self.avoided_mean,
            saved_pct: self.saved_pct,
            model_updates: self.model_updates,
            fairness: self.fairness,
            skipped_terms: self.skipped_terms,
        }
    }
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place.
pub fn write_atomically(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn emit_report(rows: &[ReportRow], dir: &Path, stem: &str, manifest_hash: &str) -> Result<(PathBuf, PathBuf)> {
    if rows.is_empty() {
        return Err(Error::invalid("report has no rows"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));

    let report = JsonReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest_hash: manifest_hash.to_string(),
        rows: rows.to_vec(),
    };
    write_atomically(&json_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n")
    })?;

    write_atomically(&csv_path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(CsvRow::new(r, manifest_hash))?;
        }
        csv.flush()
    })?;
    Ok((json_path, csv_path))
}

pub fn read_json_report(path: &Path) -> Result<Vec<ReportRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report: JsonReport = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })?;
    Ok(report.rows)
}

pub fn read_csv_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<CsvRow>()
        .map(|r| {
            r.map(CsvRow::into_row).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

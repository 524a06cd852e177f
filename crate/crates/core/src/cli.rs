//! Command-line front end.
//!
//! Settings come from three layers, later ones winning: built-in defaults,
//! the TOML manifest given with `--config`, and command-line flags. The
//! effective manifest is written next to every report and its SHA-256
//! (ignoring `workers` and `output_dir`, which cannot change results) is
//! embedded in every output file.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    generate_ball, load_csv_with, default_ball_configs, BallParams, DatasetDescriptor, Family, LoadOptions, NoiseTarget,
};
use crate::dps::{count_model_overhead, extra_update_transmissions, run_dps};
use crate::error::Error;
use crate::eval::{
    calibrate_resolution, compare_to_baseline, emit_report, run_grid, write_atomically, Comparison, DEFAULT_SPLITS,
    HISTORY_GRID, WINDOW_GRID,
};
use crate::forecast::{FitConfig, MethodKind, MAX_BUDGET};
use crate::ring::RingNetwork;
use crate::series::TimeSeries;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// One dataset of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub family: Family,
    #[serde(default = "default_group")]
    pub group: u8,
    /// CSV file; relative paths resolve against the manifest's directory.
    /// Ball entries without a path use the built-in generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<u32>,
    /// Overrides the family's built-in threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseTarget>,
}

fn default_group() -> u8 {
    1
}

impl DatasetEntry {
    pub fn descriptor(&self) -> crate::error::Result<DatasetDescriptor> {
        let mut d = DatasetDescriptor::builtin(self.family, self.group)?;
        if let Some(delta) = self.delta_min {
            d.delta_min = delta;
            d.validate()?;
        }
        Ok(d)
    }

    fn label(&self) -> String {
        format!("{} group {}", self.family, self.group)
    }

    /// Parses `FAMILY[:GROUP][=PATH]`.
    pub fn parse_flag(s: &str) -> CliResult<Self> {
        let (head, path) = match s.split_once('=') {
            Some((h, p)) => (h, Some(PathBuf::from(p))),
            None => (s, None),
        };
        let (family, group) = match head.split_once(':') {
            Some((f, g)) => (f, g.parse::<u8>().map_err(|_| usage(format!("bad group in '{s}'")))?),
            None => (head, 1),
        };
        Ok(Self {
            family: family.parse().map_err(|e: Error| usage(e.to_string()))?,
            group,
            path,
            sensor: None,
            delta_min: None,
            noise: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpsSection {
    pub history: Option<usize>,
    pub window: Option<usize>,
    /// Overrides every dataset's threshold.
    pub delta_min: Option<f64>,
    pub ring_c: Option<u64>,
    pub ring_d: Option<u64>,
}

/// Everything that determines a run's results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub n_splits: Option<usize>,
    pub workers: Option<usize>,
    pub histories: Option<Vec<usize>>,
    pub windows: Option<Vec<usize>>,
    pub methods: Option<Vec<String>>,
    pub budget: Option<u32>,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub dps: DpsSection,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| usage(format!("manifest: {e}")))
    }

    /// SHA-256 of the result-determining part of the manifest, as hex.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.workers = None;
        view.output_dir = None;
        let bytes = serde_json::to_vec(&view).expect("manifest serializes");
        Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn method_configs(&self) -> CliResult<Vec<FitConfig>> {
        let names = match &self.methods {
            Some(m) if !m.is_empty() => m.clone(),
            Some(_) => return Err(usage("method list is empty")),
            None => ["constant", "linear", "simple_mean", "es", "arima"].map(String::from).to_vec(),
        };
        let budget = self.budget.unwrap_or(MAX_BUDGET);
        names
            .iter()
            .map(|n| {
                let kind: MethodKind = n.parse().map_err(|e: Error| usage(e.to_string()))?;
                let cfg = FitConfig { budget, ..FitConfig::new(kind) };
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Serialize)]
struct ManifestRecord<'a> {
    tool_version: &'a str,
    manifest_hash: String,
    manifest: &'a RunManifest,
}

#[derive(Parser, Debug)]
#[command(name = "wsn-forecast", version, about = "Forecast-based data reduction for sensor networks")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write bouncing-ball series as CSV.
    Generate(GenerateArgs),
    /// Evaluate methods over random history/window splits.
    Evaluate(RunArgs),
    /// Simulate the dual prediction scheme.
    Dps(RunArgs),
    /// Find the resolution at which half the consecutive values coincide.
    Calibrate(CalibrateArgs),
    /// Ring-model node and transmission counts.
    Ring(RingArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Write the three reference configurations (2800 points each).
    #[arg(long = "paper-defaults")]
    pub reference_configs: bool,
    #[arg(long, default_value_t = 50.0)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2800)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub suppress_noise: bool,
    /// File name for a single custom series.
    #[arg(long, default_value = "ball.csv")]
    pub name: String,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset as FAMILY[:GROUP][=PATH]; repeatable, replaces the manifest's list.
    #[arg(long = "data")]
    pub data: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub splits: Option<usize>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// History lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub history: Vec<usize>,
    /// Window lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub window: Vec<usize>,
    /// Methods, comma separated (constant, linear, simple_mean, es, arima).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub budget: Option<u32>,
    /// Acceptance threshold for `dps`; defaults to the family's resolution.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Ring projection neighbour count for `dps`.
    #[arg(long)]
    pub ring_c: Option<u64>,
    /// Ring projection ring count for `dps`.
    #[arg(long)]
    pub ring_d: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "data")]
    pub data: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub target: f64,
    /// Also write calibration.csv into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RingArgs {
    #[arg(long)]
    pub c: u64,
    #[arg(long)]
    pub d: u64,
    /// Per-node saved percentage to project network-wide.
    #[arg(long)]
    pub saved: Option<f64>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let mut stdout = std::io::stdout();
    match execute(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn execute(command: Command, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Evaluate(a) => {
            let (m, base) = effective_manifest(&a)?;
            with_workers(m.workers, || cmd_evaluate(&m, &base, out))
        }
        Command::Dps(a) => {
            let (m, base) = effective_manifest(&a)?;
            with_workers(m.workers, || cmd_dps(&m, &base, out))
        }
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Ring(a) => cmd_ring(&a, out),
    }
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(Error::Io { path: path.to_path_buf(), source: e })
}

fn read_manifest(path: &Path) -> CliResult<(RunManifest, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let m = RunManifest::from_toml(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, base))
}

/// Merges manifest file and flags. Returns the manifest and the directory
/// that relative dataset paths resolve against.
pub fn effective_manifest(a: &RunArgs) -> CliResult<(RunManifest, PathBuf)> {
    let (mut m, mut base) = match &a.config {
        Some(p) => read_manifest(p)?,
        None => (RunManifest::default(), PathBuf::new()),
    };
    if !a.data.is_empty() {
        // Flag datasets replace the manifest's list and resolve against the
        // working directory.
        m.datasets = a.data.iter().map(|s| DatasetEntry::parse_flag(s)).collect::<CliResult<_>>()?;
        base = PathBuf::new();
    }
    if a.out.is_some() {
        m.output_dir = a.out.clone();
    }
    if let Some(s) = a.seed {
        m.seed = s;
    }
    if a.splits.is_some() {
        m.n_splits = a.splits;
    }
    if a.workers.is_some() {
        m.workers = a.workers;
    }
    if !a.history.is_empty() {
        m.histories = Some(a.history.clone());
        m.dps.history = a.history.first().copied();
    }
    if !a.window.is_empty() {
        m.windows = Some(a.window.clone());
        m.dps.window = a.window.first().copied();
    }
    if !a.methods.is_empty() {
        m.methods = Some(a.methods.clone());
    }
    if a.budget.is_some() {
        m.budget = a.budget;
    }
    if a.delta.is_some() {
        m.dps.delta_min = a.delta;
    }
    if a.ring_c.is_some() {
        m.dps.ring_c = a.ring_c;
    }
    if a.ring_d.is_some() {
        m.dps.ring_d = a.ring_d;
    }
    if m.datasets.is_empty() {
        return Err(usage("no datasets given (use --data or a manifest)"));
    }
    if m.workers == Some(0) {
        return Err(usage("workers must be >= 1"));
    }
    Ok((m, base))
}

fn load_entry(entry: &DatasetEntry, base: &Path) -> CliResult<(DatasetDescriptor, TimeSeries)> {
    let desc = entry.descriptor()?;
    let series = match &entry.path {
        Some(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            if !path.exists() {
                return Err(CliError::Data(Error::Data(format!(
                    "dataset {} not found at {}",
                    entry.label(),
                    path.display()
                ))));
            }
            let opts = LoadOptions {
                sensor: entry.sensor,
                noise: entry.noise.unwrap_or_default(),
                ..Default::default()
            };
            load_csv_with(&path, &desc, &opts)?
        }
        None if entry.family == Family::Ball => generate_ball(&default_ball_configs()[usize::from(entry.group) - 1])?
            .with_resolution(desc.delta_min)?,
        None => {
            return Err(CliError::Data(Error::Data(format!("dataset {} has no path", entry.label()))));
        }
    };
    Ok((desc, series))
}

fn output_dir(m: &RunManifest) -> PathBuf {
    m.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write_manifest_record(m: &RunManifest, dir: &Path) -> CliResult<String> {
    let hash = m.hash();
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let record = ManifestRecord {
        tool_version: TOOL_VERSION,
        manifest_hash: hash.clone(),
        manifest: m,
    };
    write_atomically(&dir.join("manifest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &record)?;
        w.write_all(b"\n")
    })?;
    Ok(hash)
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    family: &'a str,
    group: u8,
    method: &'a str,
    #[serde(rename = "H")]
    history: usize,
    #[serde(rename = "W")]
    window: usize,
    mean_difference: f64,
    half_width: f64,
    n: usize,
    significant: bool,
    favors: crate::eval::Favors,
    manifest_hash: &'a str,
}

pub fn cmd_evaluate(m: &RunManifest, base: &Path, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    let methods = m.method_configs()?;
    let histories = m.histories.clone().unwrap_or_else(|| HISTORY_GRID.to_vec());
    let windows = m.windows.clone().unwrap_or_else(|| WINDOW_GRID.to_vec());
    let n_splits = m.n_splits.unwrap_or(DEFAULT_SPLITS);
    if histories.is_empty() || windows.is_empty() {
        return Err(usage("history and window lists must be non-empty"));
    }
    if histories.contains(&0) || windows.contains(&0) || n_splits == 0 {
        return Err(usage("history, window and split counts must be >= 1"));
    }

    let mut results = Vec::new();
    for entry in &m.datasets {
        let (desc, series) = load_entry(entry, base)?;
        results.extend(run_grid(&series, &desc, &methods, &histories, &windows, n_splits, m.seed)?);
    }
    if results.is_empty() {
        return Err(CliError::Data(Error::Data("no scenario fits the datasets".into())));
    }

    let dir = output_dir(m);
    let hash = write_manifest_record(m, &dir)?;
    let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
    let (json, csv) = emit_report(&rows, &dir, "report", &hash)?;

    let mut comparisons: Vec<(usize, Comparison)> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if r.row.method == MethodKind::Constant.name() {
            continue;
        }
        let baseline = results.iter().find(|c| {
            c.row.method == MethodKind::Constant.name()
                && c.row.family == r.row.family
                && c.row.group == r.row.group
                && c.row.history == r.row.history
                && c.row.window == r.row.window
        });
        if let Some(b) = baseline {
            if let Ok(cmp) = compare_to_baseline(&r.splits, &b.splits) {
                comparisons.push((i, cmp));
            }
        }
    }
    let cmp_path = dir.join("comparisons.csv");
    write_atomically(&cmp_path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (i, c) in &comparisons {
            let row = &results[*i].row;
            csv.serialize(ComparisonRow {
                family: &row.family,
                group: row.group,
                method: &row.method,
                history: row.history,
                window: row.window,
                mean_difference: c.mean_difference,
                half_width: c.half_width,
                n: c.n,
                significant: c.significant,
                favors: c.favors,
                manifest_hash: &hash,
            })?;
        }
        csv.flush()
    })?;

    writeln!(out, "{} scenarios", rows.len()).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    for p in [&json, &csv, &cmp_path] {
        writeln!(out, "wrote {}", p.display()).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingProjection {
    pub c: u64,
    pub d: u64,
    pub nodes: u64,
    pub total_transmissions: u64,
    pub avoided_transmissions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpsSummary {
    pub family: String,
    pub group: u8,
    pub method: String,
    #[serde(rename = "H")]
    pub history: usize,
    #[serde(rename = "W")]
    pub window: usize,
    pub delta_min: f64,
    pub steps: usize,
    pub measurements: usize,
    pub post_bootstrap_measurements: usize,
    pub saved_fraction: f64,
    pub model_updates: usize,
    pub extra_update_transmissions: usize,
    pub fallbacks: usize,
    pub wire_bytes: usize,
    pub max_abs_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingProjection>,
    pub trace_file: String,
}

#[derive(Serialize, Deserialize)]
pub struct DpsReport {
    pub tool_version: String,
    pub manifest_hash: String,
    pub runs: Vec<DpsSummary>,
}

pub fn cmd_dps(m: &RunManifest, base: &Path, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    let methods = m.method_configs()?;
    let history = m.dps.history.unwrap_or(50);
    let window = m.dps.window.unwrap_or(20);
    let ring = match (m.dps.ring_c, m.dps.ring_d) {
        (Some(c), Some(d)) => Some(RingNetwork::new(c, d)?),
        (None, None) => None,
        _ => return Err(usage("ring projection needs both ring_c and ring_d")),
    };

    let dir = output_dir(m);
    let hash = write_manifest_record(m, &dir)?;
    let mut runs = Vec::new();
    for entry in &m.datasets {
        let (desc, series) = load_entry(entry, base)?;
        let delta = m.dps.delta_min.unwrap_or(desc.delta_min);
        for cfg in &methods {
            let trace = run_dps(&series, cfg, history, window, delta)?;
            let name = format!("dps_{}_g{}_{}.jsonl", desc.family, desc.group, cfg.method.name());
            let path = dir.join(&name);
            write_atomically(&path, |w| {
                serde_json::to_writer(&mut *w, &serde_json::json!({
                    "manifest_hash": hash,
                    "tool_version": TOOL_VERSION,
                }))?;
                w.write_all(b"\n")?;
                trace.write_jsonl(series.values(), w)
            })?;
            let measurements = trace.transmitted.iter().filter(|t| **t).count();
            runs.push(DpsSummary {
                family: desc.family.name().to_string(),
                group: desc.group,
                method: cfg.method.name().to_string(),
                history,
                window,
                delta_min: delta,
                steps: series.len(),
                measurements,
                post_bootstrap_measurements: trace.post_bootstrap_measurements(),
                saved_fraction: trace.saved_fraction,
                model_updates: count_model_overhead(&trace),
                extra_update_transmissions: extra_update_transmissions(&trace),
                fallbacks: trace.fallbacks.len(),
                wire_bytes: trace.wire_bytes,
                max_abs_error: trace.max_abs_error(series.values()),
                ring: ring
                    .map(|net| -> CliResult<RingProjection> {
                        Ok(RingProjection {
                            c: net.neighbours(),
                            d: net.rings(),
                            nodes: net.total_nodes(),
                            total_transmissions: net.total_transmissions(),
                            avoided_transmissions: net.network_savings(trace.saved_fraction)?,
                        })
                    })
                    .transpose()?,
                trace_file: name,
            });
        }
    }

    let summary_path = dir.join("dps_summary.json");
    let report = DpsReport {
        tool_version: TOOL_VERSION.to_string(),
        manifest_hash: hash,
        runs,
    };
    write_atomically(&summary_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n")
    })?;
    for r in &report.runs {
        writeln!(
            out,
            "{} g{} {}: saved {:.2}% ({} model updates)",
            r.family, r.group, r.method, r.saved_fraction, r.model_updates
        )
        .map_err(|e| io_err(Path::new("<stdout>"), e))?;
    }
    writeln!(out, "wrote {}", summary_path.display()).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    Ok(())
}

fn write_ball_csv(path: &Path, series: &TimeSeries) -> CliResult<()> {
    write_atomically(path, |w| {
        writeln!(w, "timestamp,value")?;
        for (t, v) in series.timestamps().iter().zip(series.values()) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let jobs: Vec<(String, BallParams)> = if a.reference_configs {
        default_ball_configs()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (format!("ball_group{}.csv", i + 1), BallParams { suppress_noise: a.suppress_noise, ..p }))
            .collect()
    } else {
        vec![(
            a.name.clone(),
            BallParams {
                theta0: a.theta0,
                lambda: a.lambda,
                gamma: a.gamma,
                n: a.n,
                dt: a.dt,
                seed: a.seed,
                suppress_noise: a.suppress_noise,
            },
        )]
    };

    #[derive(Serialize)]
    struct Generated<'a> {
        tool_version: &'a str,
        manifest_hash: String,
        files: Vec<(&'a str, &'a BallParams)>,
    }
    let files: Vec<(&str, &BallParams)> = jobs.iter().map(|(n, p)| (n.as_str(), p)).collect();
    let params_json = serde_json::to_vec(&files).expect("params serialize");
    let hash = Sha256::digest(&params_json).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });

    for (name, p) in &jobs {
        let series = generate_ball(p)?;
        let path = a.out.join(name);
        write_ball_csv(&path, &series)?;
        writeln!(out, "wrote {} ({} rows)", path.display(), series.len()).map_err(|e| io_err(&path, e))?;
    }
    let record = Generated {
        tool_version: TOOL_VERSION,
        manifest_hash: hash,
        files,
    };
    write_atomically(&a.out.join("generate_manifest.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &record)?;
        w.write_all(b"\n")
    })?;
    Ok(())
}

pub fn cmd_calibrate(a: &CalibrateArgs, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    let run = RunArgs {
        config: a.config.clone(),
        data: a.data.clone(),
        ..Default::default()
    };
    let (mut m, base) = effective_manifest(&run)?;
    if a.out.is_some() {
        m.output_dir = a.out.clone();
    }
    let mut lines = vec!["family,group,target,resolution".to_string()];
    for entry in &m.datasets {
        let (desc, series) = load_entry(entry, &base)?;
        let r = calibrate_resolution(&series, a.target)?;
        lines.push(format!("{},{},{},{}", desc.family, desc.group, a.target, r));
    }
    for l in &lines {
        writeln!(out, "{l}").map_err(|e| io_err(Path::new("<stdout>"), e))?;
    }
    if let Some(dir) = &a.out {
        let hash = write_manifest_record(&m, dir)?;
        write_atomically(&dir.join("calibration.csv"), |w| {
            for (i, l) in lines.iter().enumerate() {
                let extra = if i == 0 { "manifest_hash".to_string() } else { hash.clone() };
                writeln!(w, "{l},{extra}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn cmd_ring(a: &RingArgs, out: &mut (dyn std::io::Write + Send)) -> CliResult<()> {
    let net = RingNetwork::new(a.c, a.d)?;
    let rings: Vec<u64> = (1..=a.d).map(|d| net.nodes_in_ring(d)).collect::<Result<_, _>>()?;
    let savings = a.saved.map(|s| net.network_savings(s)).transpose()?;
    let v = serde_json::json!({
        "c": a.c,
        "d": a.d,
        "nodes_per_ring": rings,
        "total_nodes": net.total_nodes(),
        "total_transmissions": net.total_transmissions(),
        "printed_closed_form": net.approx_transmissions_closed_form(),
        "printed_closed_form_note": "reference only; disagrees with the exact sum",
        "saved_percent": a.saved,
        "avoided_transmissions": savings,
    });
    serde_json::to_writer_pretty(&mut *out, &v).map_err(|e| CliError::Data(Error::Data(e.to_string())))?;
    writeln!(out).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_flag_forms() {
        let d = DatasetEntry::parse_flag("intel:3=a/b.csv").unwrap();
        assert_eq!((d.family, d.group), (Family::Intel, 3));
        assert_eq!(d.path, Some(PathBuf::from("a/b.csv")));
        let b = DatasetEntry::parse_flag("ball:2").unwrap();
        assert_eq!((b.family, b.group, b.path), (Family::Ball, 2, None));
        assert!(DatasetEntry::parse_flag("humidity=x.csv").is_err());
        assert!(DatasetEntry::parse_flag("intel:x").is_err());
    }

    #[test]
    fn manifest_parses_and_hashes() {
        let text = r#"
            seed = 7
            histories = [20, 50]
            methods = ["constant", "es"]
            [[datasets]]
            family = "sensorscope"
            group = 1
            path = "s.csv"
            [dps]
            history = 100
            ring_c = 5
            ring_d = 3
        "#;
        let m = RunManifest::from_toml(text).unwrap();
        assert_eq!(m.seed, 7);
        assert_eq!(m.datasets[0].family, Family::Sensorscope);
        assert_eq!(m.method_configs().unwrap().len(), 2);
        let mut other = m.clone();
        other.workers = Some(3);
        other.output_dir = Some("elsewhere".into());
        assert_eq!(m.hash(), other.hash());
        other.seed = 8;
        assert_ne!(m.hash(), other.hash());
        assert_eq!(m.hash().len(), 64);
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        assert!(matches!(RunManifest::from_toml("sede = 1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn flags_override_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("m.toml");
        std::fs::write(&cfg, "seed = 1\nn_splits = 10\n[[datasets]]\nfamily = \"ball\"\n").unwrap();
        let args = RunArgs {
            config: Some(cfg),
            seed: Some(5),
            window: vec![7, 9],
            ..Default::default()
        };
        let (m, base) = effective_manifest(&args).unwrap();
        assert_eq!(m.seed, 5);
        assert_eq!(m.n_splits, Some(10));
        assert_eq!(m.windows, Some(vec![7, 9]));
        assert_eq!(m.dps.window, Some(7));
        assert_eq!(base, dir.path());
    }

    #[test]
    fn ring_output() {
        let mut buf = Vec::new();
        cmd_ring(&RingArgs { c: 5, d: 3, saved: Some(30.0) }, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["total_transmissions"], 110);
        assert_eq!(v["avoided_transmissions"], 33);
        assert_eq!(v["printed_closed_form"], 67.5);
    }
}

//! Benchmark protocol: masking cases over a grid of missing fractions,
//! accuracy metrics against the generating truth, oracle selection of the
//! ridge multipliers, a linear-interpolation baseline, and report output.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use itertools::Itertools;
use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::FemmConfig;
use crate::driver::{fit, restart_seed, FitResult};
use crate::error::{FemmError, Result};
use crate::model::{simulate, ModelSet, SwitchingWeights};
use crate::series::Series;
use crate::synth::{default_protected, generate, inject_mcar, GeneratorSpec, SyntheticData};

pub const MSE_RECONSTRUCTION_X: &str = "mse_reconstruction_x";
pub const MSE_RECONSTRUCTION_U: &str = "mse_reconstruction_u";
pub const MSE_THETA: &str = "mse_theta";
pub const GAMMA_MISFITS: &str = "gamma_misfits";
pub const MSE_SIMULATED_REC_U: &str = "mse_simulated_rec_u";
pub const MSE_SIMULATED_ORIG_U: &str = "mse_simulated_orig_u";
pub const OBJECTIVE: &str = "objective";
pub const RUNTIME_SECONDS: &str = "runtime_seconds";

/// Written into every report.
pub const REPORT_NOTE: &str = "reconstruction MSE is averaged over missing coordinates only; \
simulated series are noise-free, start from the true initial window and are compared with the \
original target from step mem onwards";

pub const CSV_HEADER: &str = "case,fraction,method,metric,value,seed";

/// Which series receive missing entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    X,
    U,
    Both,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::X => "x",
            Case::U => "u",
            Case::Both => "both",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = FemmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" | "a" => Ok(Case::X),
            "u" | "b" => Ok(Case::U),
            "both" | "c" => Ok(Case::Both),
            _ => Err(FemmError::Config(format!("unknown case '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Simultaneous fit and reconstruction, ridge multipliers chosen by oracle.
    Femm,
    /// Linear interpolation, then a complete-data fit.
    Baseline,
    /// Single regime without switching on the masked data.
    Stationary,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Femm => "femm",
            Method::Baseline => "baseline",
            Method::Stationary => "stationary",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = FemmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(FemmError::Config(format!("unknown preset '{s}'"))),
        }
    }
}

/// Minimal misfit count over all relabelings of the estimate, together with
/// the permutation `perm` for which `estimate.permuted(perm)` is aligned with
/// the truth. Both weight sets are hard-assigned by column argmax.
pub fn gamma_misfits(truth: &SwitchingWeights, estimate: &SwitchingWeights) -> Result<(usize, Vec<usize>)> {
    if truth.len() != estimate.len() || truth.k() != estimate.k() {
        return Err(FemmError::Dimension("weights differ in shape".into()));
    }
    let k = truth.k();
    let (lt, le) = (truth.hard_labels(), estimate.hard_labels());
    let mut best = (usize::MAX, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        // estimated label perm[i] plays the role of true label i
        let mut relabel = vec![0; k];
        for (i, &e) in perm.iter().enumerate() {
            relabel[e] = i;
        }
        let count = lt.iter().zip(&le).filter(|(t, e)| relabel[**e] != **t).count();
        if count < best.0 {
            best = (count, perm);
        }
    }
    Ok(best)
}

/// Mean squared difference over every parameter entry of every model.
/// Labels must already be aligned.
pub fn theta_mse(truth: &ModelSet, estimate: &ModelSet) -> Result<f64> {
    let same = truth.k() == estimate.k()
        && truth.dimx() == estimate.dimx()
        && truth.dimu() == estimate.dimu()
        && truth.q() == estimate.q()
        && truth.p() == estimate.p();
    if !same {
        return Err(FemmError::Dimension("parameter sets differ in shape".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in truth.models().iter().zip(estimate.models()) {
        let d = a.coefficients() - b.coefficients();
        sum += d.norm_squared();
        n += d.len();
    }
    Ok(sum / n as f64)
}

/// Mean squared error over the masked coordinates; zero when none are masked.
pub fn reconstruction_mse(truth: &DMatrix<f64>, filled: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    if truth.shape() != filled.shape() || truth.shape() != mask.shape() {
        return Err(FemmError::Dimension("reconstruction buffers differ in shape".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for ((a, b), m) in truth.iter().zip(filled.iter()).zip(mask.iter()) {
        if *m {
            sum += (a - b).powi(2);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Noise-free simulation from the first `mem` columns of `x_true`, compared
/// with `x_true` on the remaining steps.
pub fn simulation_mse(
    models: &ModelSet,
    gamma: &SwitchingWeights,
    u: &DMatrix<f64>,
    x_true: &DMatrix<f64>,
) -> Result<f64> {
    let mem = models.mem();
    let init = x_true.columns(0, mem).into_owned();
    let sim = simulate(models, gamma, u, &init, None, 0)?;
    let tail = x_true.columns(mem, x_true.ncols() - mem) - sim.columns(mem, sim.ncols() - mem);
    Ok(tail.norm_squared() / tail.len() as f64)
}

/// Per-dimension linear interpolation with constant extension at the edges.
pub fn baseline_interpolate(series: &Series) -> Result<DMatrix<f64>> {
    series.interpolate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub generator: GeneratorSpec,
    pub femm: FemmConfig,
    pub case: Case,
    pub fractions: Vec<f64>,
    /// One generated data set per seed.
    pub seeds: Vec<u64>,
    /// Candidate `ridge_x` values, searched in cases x and both.
    pub grid_x: Vec<f64>,
    /// Candidate `ridge_u` values, searched in cases u and both.
    pub grid_u: Vec<f64>,
    pub methods: Vec<Method>,
    /// Fit the interpolated data for the baseline; otherwise only its
    /// reconstruction error is reported.
    pub baseline_fit: bool,
    /// Keep the whole initial window observed instead of only the first step.
    pub protect_initial: bool,
    pub workers: usize,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl BenchmarkSettings {
    pub fn preset(preset: Preset) -> Self {
        let full_grid = vec![0.0, 1e-6, 1e-4, 0.005, 0.1];
        match preset {
            Preset::Full => Self {
                generator: GeneratorSpec::default(),
                femm: FemmConfig {
                    max_restart: 500,
                    ..FemmConfig::default()
                },
                case: Case::X,
                fractions: (0..10).map(|i| 0.05 + 0.1 * i as f64).collect(),
                seeds: vec![0],
                grid_x: full_grid.clone(),
                grid_u: full_grid,
                methods: vec![Method::Femm, Method::Baseline],
                baseline_fit: true,
                protect_initial: false,
                workers: 1,
            },
            Preset::Desk => Self {
                generator: GeneratorSpec::default(),
                femm: FemmConfig {
                    warm_up: true,
                    ..FemmConfig::default()
                },
                case: Case::X,
                fractions: vec![0.05, 0.15, 0.25, 0.35, 0.45],
                seeds: (0..5).collect(),
                grid_x: vec![0.0],
                grid_u: vec![0.005],
                methods: vec![Method::Femm, Method::Baseline],
                baseline_fit: true,
                protect_initial: false,
                workers: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.femm.validate()?;
        self.generator.validate(2)?;
        if self.fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(FemmError::Config("fractions must lie in [0, 1)".into()));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(FemmError::Config("need at least one seed and one method".into()));
        }
        if self.grid_points().is_empty() {
            return Err(FemmError::Config("ridge grid is empty".into()));
        }
        if self.grid_x.iter().chain(&self.grid_u).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FemmError::Config("ridge grid values must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// `(ridge_x, ridge_u)` candidates for the configured case.
    pub fn grid_points(&self) -> Vec<(f64, f64)> {
        let fixed_x = [self.femm.ridge_x];
        let fixed_u = [self.femm.ridge_u];
        let (gx, gu): (&[f64], &[f64]) = match self.case {
            Case::X => (&self.grid_x, &fixed_u),
            Case::U => (&fixed_x, &self.grid_u),
            Case::Both => (&self.grid_x, &self.grid_u),
        };
        gx.iter().cartesian_product(gu).map(|(a, b)| (*a, *b)).collect()
    }
}

/// Outcome of one grid point within a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub ridge_x: f64,
    pub ridge_u: f64,
    /// Selection score: reconstruction MSE of the masked series.
    #[serde(with = "lossy_float::option")]
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// One `(case, fraction, seed, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub case: Case,
    pub fraction: f64,
    pub seed: u64,
    pub method: Method,
    #[serde(with = "lossy_float::map")]
    pub metrics: BTreeMap<String, f64>,
    /// Configuration of the reported fit.
    pub config: FemmConfig,
    #[serde(default)]
    pub grid: Vec<GridOutcome>,
    pub selected: Option<usize>,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub case: Case,
    pub fraction: f64,
    pub method: Method,
    pub metric: String,
    #[serde(with = "lossy_float")]
    pub mean: f64,
    #[serde(with = "lossy_float")]
    pub stddev: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub note: String,
    pub settings: Vec<BenchmarkSettings>,
    pub records: Vec<CellRecord>,
}

impl BenchmarkReport {
    /// Long-format table, one row per metric.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.records {
            let prefix = format!("{},{},{}", r.case, r.fraction, r.method);
            if let Some(e) = &r.error {
                out.push_str(&format!("{prefix},failure,NaN,{}\n", r.seed));
                warn!("cell {prefix} seed {}: {e}", r.seed);
                continue;
            }
            for (m, v) in &r.metrics {
                out.push_str(&format!("{prefix},{m},{},{}\n", fmt_value(*v), r.seed));
            }
        }
        out
    }

    /// Mean and sample standard deviation over seeds, failed cells excluded.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(Case, u64, Method, String), (f64, Vec<f64>)> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.error.is_none()) {
            for (m, v) in &r.metrics {
                groups
                    .entry((r.case, r.fraction.to_bits(), r.method, m.clone()))
                    .or_insert_with(|| (r.fraction, Vec::new()))
                    .1
                    .push(*v);
            }
        }
        groups
            .into_iter()
            .map(|((case, _, method, metric), (fraction, v))| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 {
                    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                AggregateRow {
                    case,
                    fraction,
                    method,
                    metric,
                    mean,
                    stddev: var.sqrt(),
                    count: v.len(),
                }
            })
            .collect()
    }

    /// Mean of `metric` over the successful cells matching the filter.
    pub fn mean(&self, case: Case, fraction: f64, method: Method, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.error.is_none() && r.case == case && r.method == method && r.fraction == fraction)
            .filter_map(|r| r.metrics.get(metric).copied())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Structured summary: note, settings, records and aggregates.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "note": self.note,
            "settings": self.settings,
            "records": self.records,
            "aggregate": self.aggregate(),
        })
    }

    pub fn from_summary_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Stored {
            note: String,
            settings: Vec<BenchmarkSettings>,
            records: Vec<CellRecord>,
        }
        let s: Stored = serde_json::from_str(text).map_err(|e| FemmError::Parse(e.to_string()))?;
        Ok(Self {
            note: s.note,
            settings: s.settings,
            records: s.records,
        })
    }

    /// Concatenates runs; records are sorted by case, fraction, method, seed.
    pub fn merge(reports: Vec<BenchmarkReport>) -> Self {
        let mut settings = Vec::new();
        let mut records = Vec::new();
        for r in reports {
            for s in r.settings {
                if !settings.contains(&s) {
                    settings.push(s);
                }
            }
            records.extend(r.records);
        }
        records.sort_by(|a, b| {
            (a.case, a.fraction, a.method, a.seed)
                .partial_cmp(&(b.case, b.fraction, b.method, b.seed))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self {
            note: REPORT_NOTE.to_string(),
            settings,
            records,
        }
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// A cell together with the fit behind it, when there is one.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub record: CellRecord,
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone)]
pub struct CaseRun {
    pub report: BenchmarkReport,
    pub outcomes: Vec<CellOutcome>,
}

/// Masked copies of one data set.
#[derive(Debug, Clone)]
pub struct MaskedData {
    pub x: Series,
    pub u: Series,
}

/// Masks complete `x` and `u` according to `case`. The two masks use
/// independent streams derived from `seed`.
pub fn mask_data(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    mem: usize,
    case: Case,
    fraction: f64,
    protect_initial: bool,
    seed: u64,
) -> Result<MaskedData> {
    let protected = default_protected(x.ncols(), mem, protect_initial);
    let x = Series::complete(x.clone());
    let u = Series::complete(u.clone());
    let masked = |s: &Series, stream: usize| inject_mcar(s, fraction, &protected, restart_seed(seed, stream));
    Ok(match case {
        Case::X => MaskedData { x: masked(&x, 1)?, u },
        Case::U => MaskedData { x, u: masked(&u, 2)? },
        Case::Both => MaskedData {
            x: masked(&x, 1)?,
            u: masked(&u, 2)?,
        },
    })
}

fn score(case: Case, mx: f64, mu: f64) -> f64 {
    match case {
        Case::X => mx,
        Case::U => mu,
        Case::Both => 0.5 * (mx + mu),
    }
}

/// Metrics of a fit against the truth. Misfits and parameter error are only
/// defined when the regime counts agree.
fn fit_metrics(data: &SyntheticData, masked: &MaskedData, fit: &FitResult) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert(MSE_RECONSTRUCTION_X.into(), reconstruction_mse(&data.x, &fit.x_filled, masked.x.mask())?);
    m.insert(MSE_RECONSTRUCTION_U.into(), reconstruction_mse(&data.u, &fit.u_filled, masked.u.mask())?);
    if fit.models.k() == data.truth.models.k() {
        let (misfits, perm) = gamma_misfits(&data.gamma, &fit.gamma)?;
        m.insert(GAMMA_MISFITS.into(), misfits as f64);
        m.insert(MSE_THETA.into(), theta_mse(&data.truth.models, &fit.models.permuted(&perm))?);
    }
    m.insert(MSE_SIMULATED_REC_U.into(), simulation_mse(&fit.models, &fit.gamma, &fit.u_filled, &data.x)?);
    m.insert(MSE_SIMULATED_ORIG_U.into(), simulation_mse(&fit.models, &fit.gamma, &data.u, &data.x)?);
    m.insert(OBJECTIVE.into(), fit.objective());
    Ok(m)
}

fn run_femm(
    settings: &BenchmarkSettings,
    data: &SyntheticData,
    masked: &MaskedData,
    seed: u64,
) -> (Vec<GridOutcome>, Option<(usize, FemmConfig, FitResult)>) {
    let mut grid = Vec::new();
    let mut best: Option<(usize, f64, FemmConfig, FitResult)> = None;
    for (i, (rx, ru)) in settings.grid_points().into_iter().enumerate() {
        let config = FemmConfig {
            ridge_x: rx,
            ridge_u: ru,
            seed,
            ..settings.femm.clone()
        };
        let outcome = fit(&masked.x, &masked.u, &config).and_then(|f| {
            let mx = reconstruction_mse(&data.x, &f.x_filled, masked.x.mask())?;
            let mu = reconstruction_mse(&data.u, &f.u_filled, masked.u.mask())?;
            Ok((score(settings.case, mx, mu), f))
        });
        match outcome {
            Ok((s, f)) => {
                grid.push(GridOutcome {
                    ridge_x: rx,
                    ridge_u: ru,
                    score: Some(s),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| s < b.1) {
                    best = Some((i, s, config, f));
                }
            }
            Err(e) => grid.push(GridOutcome {
                ridge_x: rx,
                ridge_u: ru,
                score: None,
                error: Some(e.to_string()),
            }),
        }
    }
    (grid, best.map(|(i, _, c, f)| (i, c, f)))
}

fn run_cell(
    settings: &BenchmarkSettings,
    data: &SyntheticData,
    fraction: f64,
    seed: u64,
    method: Method,
) -> CellOutcome {
    let start = Instant::now();
    let mut record = CellRecord {
        case: settings.case,
        fraction,
        seed,
        method,
        metrics: BTreeMap::new(),
        config: FemmConfig {
            seed,
            ..settings.femm.clone()
        },
        grid: Vec::new(),
        selected: None,
        runtime_seconds: 0.0,
        error: None,
    };
    let mut fit_out = None;
    let result = (|| -> Result<()> {
        let masked = mask_data(
            &data.x,
            &data.u,
            data.truth.models.mem(),
            settings.case,
            fraction,
            settings.protect_initial,
            seed,
        )?;
        match method {
            Method::Femm => {
                let (grid, best) = run_femm(settings, data, &masked, seed);
                let failures: Vec<String> = grid.iter().filter_map(|g| g.error.clone()).collect();
                record.grid = grid;
                let (i, config, f) = best.ok_or_else(|| FemmError::AllRestartsFailed {
                    restarts: settings.femm.max_restart,
                    details: failures.join("; "),
                })?;
                record.selected = Some(i);
                record.config = config;
                record.metrics = fit_metrics(data, &masked, &f)?;
                fit_out = Some(f);
            }
            Method::Baseline => {
                let x_fill = baseline_interpolate(&masked.x)?;
                let u_fill = baseline_interpolate(&masked.u)?;
                if settings.baseline_fit {
                    let f = fit(&Series::complete(x_fill), &Series::complete(u_fill), &record.config)?;
                    record.metrics = fit_metrics(data, &masked, &f)?;
                    fit_out = Some(f);
                } else {
                    record.metrics.insert(
                        MSE_RECONSTRUCTION_X.into(),
                        reconstruction_mse(&data.x, &x_fill, masked.x.mask())?,
                    );
                    record.metrics.insert(
                        MSE_RECONSTRUCTION_U.into(),
                        reconstruction_mse(&data.u, &u_fill, masked.u.mask())?,
                    );
                }
            }
            Method::Stationary => {
                // a single regime has fixed weights, so restarts coincide
                record.config = FemmConfig {
                    k: 1,
                    c: 0.0,
                    max_restart: 1,
                    ..record.config.clone()
                };
                let f = fit(&masked.x, &masked.u, &record.config)?;
                record.metrics = fit_metrics(data, &masked, &f)?;
                fit_out = Some(f);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        warn!("{} {} fraction {fraction} seed {seed}: {e}", settings.case, method);
        record.error = Some(e.to_string());
        record.metrics.clear();
    }
    record.runtime_seconds = start.elapsed().as_secs_f64();
    if record.error.is_none() {
        record.metrics.insert(RUNTIME_SECONDS.into(), record.runtime_seconds);
    }
    CellOutcome { record, fit: fit_out }
}

/// Runs every `(seed, fraction, method)` cell of one case on a pool of
/// `settings.workers` threads. Failed cells are recorded and the run goes on.
pub fn run_case(settings: &BenchmarkSettings) -> Result<CaseRun> {
    settings.validate()?;
    let data: Vec<SyntheticData> = settings
        .seeds
        .iter()
        .map(|&s| {
            generate(&GeneratorSpec {
                seed: s,
                ..settings.generator.clone()
            })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64, Method)> = (0..settings.seeds.len())
        .cartesian_product(settings.fractions.iter().copied())
        .cartesian_product(settings.methods.iter().copied())
        .map(|((s, f), m)| (s, f, m))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CellOutcome)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = settings.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(s, f, m)) = jobs.get(j) else { break };
                let out = run_cell(settings, &data[s], f, settings.seeds[s], m);
                info!(
                    "{} fraction {f} seed {} {m}: {:.1}s",
                    settings.case, settings.seeds[s], out.record.runtime_seconds
                );
                results.lock().expect("worker panicked").push((j, out));
            });
        }
    });
    let mut results = results.into_inner().expect("worker panicked");
    results.sort_by_key(|(j, _)| *j);
    let outcomes: Vec<CellOutcome> = results.into_iter().map(|(_, o)| o).collect();
    Ok(CaseRun {
        report: BenchmarkReport {
            note: REPORT_NOTE.to_string(),
            settings: vec![settings.clone()],
            records: outcomes.iter().map(|o| o.record.clone()).collect(),
        },
        outcomes,
    })
}

/// JSON has no encoding for non-finite numbers; they are written as strings.
mod lossy_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    fn encode(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Number(v)
        } else {
            Repr::Text(super::fmt_value(v))
        }
    }

    fn decode<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(|_| E::custom(format!("not a number: {s}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(encode).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(decode).transpose()
        }
    }

    pub mod map {
        use std::collections::BTreeMap;

        use super::*;

        pub fn serialize<S: Serializer>(v: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|(k, x)| (k, encode(*x))).collect::<BTreeMap<_, _>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, r)| decode(r).map(|v| (k, v)))
                .collect()
        }
    }
}

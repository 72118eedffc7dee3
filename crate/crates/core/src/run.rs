//! Command implementations behind the `icepinn` binary.
//!
//! A run is described by one TOML file ([`RunConfig`]). Before any work the
//! fully resolved config is written to `<out>/config.toml`, so every run
//! directory can be replayed with `icepinn train --config <dir>/config.toml`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{
    build_windows, split_and_sample, synth_scenario, Dataset, NominalRange, NormalizationSpec, SampleWindow,
    ScenarioConfig, SplitPlan, INPUT_CHANNELS, INPUT_DAYS,
};
use crate::error::{Error, Result};
use crate::grid::{write_grid_file, GridField, Variable};
use crate::model::{load_checkpoint_expecting, save_checkpoint, ModelConfig, LEVELS};
use crate::physics::LossWeights;
use crate::train::{
    self, evaluate, predict, run_sweep, AdamConfig, EpochLog, EvalReport, MetricSet, ModelKind, Objective,
    ResultRow, RunSpec, RunSummary, SweepSpec, TrainConfig, VariableMetrics,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub base_channels: usize,
    pub attention_reduction: usize,
    /// Defaults to 7, or 3 on grids with a side below 16.
    pub spatial_kernel: Option<usize>,
    /// Defaults to on, and is forced off by `no_phy`.
    pub sic_sigmoid: Option<bool>,
    pub include_xy: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            base_channels: m.base_channels,
            attention_reduction: m.attention_reduction,
            spatial_kernel: None,
            sic_sigmoid: None,
            include_xy: m.include_xy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda_sat: f64,
    pub lambda_therm: f64,
    /// Data loss only and a linear SIC head.
    pub no_phy: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let Objective::PhysicsInformed { weights } = t.objective else {
            unreachable!("default objective is physics-informed")
        };
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            lambda_sat: weights.lambda_sat,
            lambda_therm: weights.lambda_therm,
            no_phy: false,
        }
    }
}

/// Date ranges are inclusive. Missing bounds split the dataset's days in
/// half: the first half trains, the second tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ratios: Vec<f64>,
    /// `[lambda_sat, lambda_therm]` pairs, one PINN run each.
    pub lambdas: Vec<[f64; 2]>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ratios: vec![0.2, 0.5, 1.0],
            lambdas: vec![[0.2, 0.2]],
            seeds: vec![0],
            workers: 1,
        }
    }
}

/// Everything one command needs, as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Seeds the training subset, initialization and batch order.
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub split: SplitSection,
    /// Overrides of the nominal `[min, max]` range per variable tag.
    pub normalization: BTreeMap<String, [f64; 2]>,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            out: PathBuf::from("run"),
            seed: 0,
            model: ModelSection::default(),
            train: TrainSection::default(),
            split: SplitSection::default(),
            normalization: BTreeMap::new(),
            sweep: SweepSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    pub lambda_sat: Option<f64>,
    pub lambda_therm: Option<f64>,
    pub no_phy: bool,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.dataset {
            self.dataset = d.clone();
        }
        if let Some(d) = &o.out {
            self.out = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.ratio {
            self.split.ratio = r;
        }
        if let Some(l) = o.lambda_sat {
            self.train.lambda_sat = l;
        }
        if let Some(l) = o.lambda_therm {
            self.train.lambda_therm = l;
        }
        if o.no_phy {
            self.train.no_phy = true;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(lr) = o.learning_rate {
            self.train.learning_rate = lr;
        }
    }

    /// Fills every default that depends on the dataset and checks the result.
    pub fn resolve(&self, dataset: &Dataset) -> Result<Resolved> {
        let mut cfg = self.clone();
        let g = dataset.geometry();
        let factor = 1 << LEVELS;
        if g.height % factor != 0 || g.width % factor != 0 {
            return Err(Error::Config(format!(
                "grid {}x{} must have sides divisible by {factor}",
                g.height, g.width
            )));
        }
        if cfg.train.no_phy {
            if cfg.model.sic_sigmoid == Some(true) {
                warn!("no_phy turns the SIC sigmoid off");
            }
            cfg.model.sic_sigmoid = Some(false);
            cfg.train.lambda_sat = 0.0;
            cfg.train.lambda_therm = 0.0;
        }
        cfg.model.sic_sigmoid.get_or_insert(true);
        cfg.model
            .spatial_kernel
            .get_or_insert(ModelConfig::default_spatial_kernel(g.height, g.width));

        let dates = dataset.dates();
        if dates.len() < 2 * (INPUT_DAYS + 1) {
            return Err(Error::Config(format!(
                "dataset has {} days; a train and a test window need at least {}",
                dates.len(),
                2 * (INPUT_DAYS + 1)
            )));
        }
        let half = dates.len() / 2;
        let s = &mut cfg.split;
        s.train_start.get_or_insert(dates[0]);
        s.train_end.get_or_insert(dates[half - 1]);
        s.test_start.get_or_insert(dates[half]);
        s.test_end.get_or_insert(dates[dates.len() - 1]);

        let model = ModelConfig {
            in_channels: INPUT_CHANNELS,
            base_channels: cfg.model.base_channels,
            levels: LEVELS,
            attention_reduction: cfg.model.attention_reduction,
            spatial_kernel: cfg.model.spatial_kernel.expect("filled"),
            sic_sigmoid: cfg.model.sic_sigmoid.expect("filled"),
            include_xy: cfg.model.include_xy,
        };
        model.validate()?;
        let weights = LossWeights::new(cfg.train.lambda_sat, cfg.train.lambda_therm)?;
        let train = TrainConfig {
            epochs: cfg.train.epochs,
            batch_size: cfg.train.batch_size,
            adam: AdamConfig {
                learning_rate: cfg.train.learning_rate,
                beta1: cfg.train.beta1,
                beta2: cfg.train.beta2,
                epsilon: cfg.train.epsilon,
            },
            objective: if cfg.train.no_phy {
                Objective::DataOnly
            } else {
                Objective::PhysicsInformed { weights }
            },
            seed: cfg.seed,
        };
        train.validate()?;
        let split = SplitPlan {
            train_start: cfg.split.train_start.expect("filled"),
            train_end: cfg.split.train_end.expect("filled"),
            test_start: cfg.split.test_start.expect("filled"),
            test_end: cfg.split.test_end.expect("filled"),
            ratio: cfg.split.ratio,
            seed: cfg.seed,
        };
        split.validate()?;
        let mut ranges: Vec<(Variable, NominalRange)> = NormalizationSpec::default().ranges().collect();
        for (tag, [lo, hi]) in &cfg.normalization {
            let var: Variable = tag
                .parse()
                .map_err(|t| Error::Config(format!("unknown variable `{t}` in [normalization]")))?;
            let slot = ranges.iter_mut().find(|(v, _)| *v == var).expect("every variable has a range");
            slot.1 = NominalRange::new(*lo, *hi);
        }
        let norm = NormalizationSpec::from_ranges(ranges)?;
        Ok(Resolved {
            config: cfg,
            model,
            train,
            split,
            norm,
        })
    }
}

/// A [`RunConfig`] with its dataset-dependent defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitPlan,
    pub norm: NormalizationSpec,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn freeze(config: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(CONFIG_FILE), config.to_toml_string())
}

/// Reads a run directory's frozen config and resolves it against its dataset.
pub fn load_run(dir: &Path, dataset: Option<&Path>) -> Result<(Resolved, Dataset)> {
    let mut cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    if let Some(d) = dataset {
        cfg.dataset = d.to_path_buf();
    }
    let ds = Dataset::open(&cfg.dataset)?;
    Ok((cfg.resolve(&ds)?, ds))
}

fn all_windows(dataset: &Dataset, norm: &NormalizationSpec, range: Option<(NaiveDate, NaiveDate)>) -> Result<Vec<SampleWindow>> {
    let days = dataset.load(range)?;
    Ok(build_windows(&days, dataset.coast(), norm)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub out: PathBuf,
    pub height: usize,
    pub width: usize,
    pub days: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub land_fraction: f64,
    pub mean_sic: f64,
    pub courant: f64,
}

/// Generates a synthetic scenario and writes it as a dataset under `out`.
pub fn cmd_synth(config: &ScenarioConfig, out: &Path) -> Result<SynthSummary> {
    if config.days < INPUT_DAYS + 1 {
        return Err(Error::Config(format!(
            "{} days cannot form a single window; at least {} are needed",
            config.days,
            INPUT_DAYS + 1
        )));
    }
    let scenario = synth_scenario(config)?;
    create_dir(out)?;
    Dataset::write_scenario(out, &scenario)?;
    let land = scenario.coast.land();
    let dates = scenario.dates();
    let (mut sum, mut n) = (0.0, 0usize);
    for fields in scenario.days.values() {
        let f = &fields[&Variable::Sic];
        for (v, ok) in f.values().iter().zip(f.valid()) {
            if *ok {
                sum += f64::from(*v);
                n += 1;
            }
        }
    }
    let summary = SynthSummary {
        out: out.to_path_buf(),
        height: config.height,
        width: config.width,
        days: dates.len(),
        first_date: dates[0],
        last_date: dates[dates.len() - 1],
        land_fraction: land.iter().filter(|l| **l).count() as f64 / land.len() as f64,
        mean_sic: sum / n.max(1) as f64,
        courant: config.courant(),
    };
    info!(
        "wrote {} days of {}x{} grids to {} (land {:.1}%, mean SIC {:.3}, Courant {:.3})",
        summary.days,
        summary.height,
        summary.width,
        out.display(),
        100.0 * summary.land_fraction,
        summary.mean_sic,
        summary.courant
    );
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct Provenance<'a> {
    package: &'static str,
    version: &'static str,
    checkpoint_format_version: u32,
    dataset: &'a Path,
    dataset_format_version: u32,
    geometry: &'a crate::grid::GridGeometry,
    seed: u64,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    split: &'a SplitPlan,
    train_dates: Vec<NaiveDate>,
    parameter_count: usize,
}

fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for row in log {
        w.serialize(row)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub dir: PathBuf,
    pub train_windows: usize,
    pub test_windows: usize,
    pub log: Vec<EpochLog>,
}

/// Trains on the resolved split and writes checkpoint, loss log and
/// provenance into `dir`; returns the test windows for evaluation.
fn train_into(
    resolved: &Resolved,
    dataset: &Dataset,
    windows: Vec<SampleWindow>,
    dir: &Path,
) -> Result<(TrainReport, Vec<SampleWindow>, crate::model::HisUnetParams<f32>)> {
    freeze(&resolved.config, dir)?;
    let (train_set, test_set) = split_and_sample(windows, &resolved.split)?;
    info!(
        "{}: {} training windows, {} test windows",
        dir.display(),
        train_set.len(),
        test_set.len()
    );
    let outcome = train::train(&resolved.model, &train_set, &resolved.norm, &resolved.train)?;
    save_checkpoint(&outcome.params, &dir.join(CHECKPOINT_FILE))?;
    write_loss_log(&dir.join(LOSS_LOG_FILE), &outcome.log)?;
    let prov = Provenance {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        checkpoint_format_version: 1,
        dataset: &resolved.config.dataset,
        dataset_format_version: dataset.manifest().format_version,
        geometry: dataset.geometry(),
        seed: resolved.config.seed,
        model: &resolved.model,
        train: &resolved.train,
        split: &resolved.split,
        train_dates: train_set.iter().map(|w| w.date).collect(),
        parameter_count: outcome.params.count(),
    };
    let json = serde_json::to_string_pretty(&prov).expect("provenance serializes");
    write_file(&dir.join(PROVENANCE_FILE), json)?;
    Ok((
        TrainReport {
            dir: dir.to_path_buf(),
            train_windows: train_set.len(),
            test_windows: test_set.len(),
            log: outcome.log,
        },
        test_set,
        outcome.params,
    ))
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainReport> {
    let dataset = Dataset::open(&config.dataset)?;
    let resolved = config.resolve(&dataset)?;
    let windows = all_windows(&dataset, &resolved.norm, None)?;
    let (report, _, _) = train_into(&resolved, &dataset, windows, &config.out)?;
    Ok(report)
}

/// Writes `u`, `v` and SIC grids for each date under `out/<date>/`.
pub fn cmd_predict(run_dir: &Path, dataset: Option<&Path>, dates: &[NaiveDate], out: &Path) -> Result<Vec<PathBuf>> {
    if dates.is_empty() {
        return Err(Error::Config("no prediction dates given".into()));
    }
    let (resolved, ds) = load_run(run_dir, dataset)?;
    let params = load_checkpoint_expecting(&run_dir.join(CHECKPOINT_FILE), &resolved.model)?;
    let windows = all_windows(&ds, &resolved.norm, None)?;
    let mut chosen = Vec::new();
    let mut missing = Vec::new();
    for d in dates {
        match windows.iter().find(|w| w.date == *d) {
            Some(w) => chosen.push(w.clone()),
            None => missing.push(d.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "inadmissible dates (need {INPUT_DAYS} complete prior days and a target day): {}",
            missing.join(", ")
        )));
    }
    let preds = predict(&params, &chosen, &resolved.norm)?;
    let valid: Vec<bool> = ds.coast().land().iter().map(|l| !l).collect();
    let mut written = Vec::new();
    for p in &preds {
        let day_dir = out.join(p.date.format("%Y-%m-%d").to_string());
        for (var, values) in [
            (Variable::SivU, &p.u_kmday),
            (Variable::SivV, &p.v_kmday),
            (Variable::Sic, &p.sic),
        ] {
            let field = GridField::new(p.geometry.clone(), var, p.date, values.clone(), valid.clone())?;
            let stem = day_dir.join(var.tag());
            write_grid_file(&field, &stem)?;
            written.push(stem);
        }
    }
    info!("wrote {} prediction grids under {}", written.len(), out.display());
    Ok(written)
}

#[derive(Debug, Serialize)]
struct MetricRow<'a> {
    scope: &'a str,
    date: Option<NaiveDate>,
    variable: &'a str,
    units: &'a str,
    rmse: f64,
    mae: f64,
    acc: Option<f64>,
    valid_pixels: usize,
    violation_rate: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MonthRow<'a> {
    year: i32,
    month: u32,
    days: usize,
    variable: &'a str,
    units: &'a str,
    rmse: f64,
    mae: f64,
    acc: Option<f64>,
    valid_pixels: usize,
}

/// Display units: drift in km/day, concentration in percent.
fn display(set: &MetricSet) -> [(&'static str, &'static str, VariableMetrics); 4] {
    [
        ("SIV", "km/day", set.siv),
        ("SIV_U", "km/day", set.u),
        ("SIV_V", "km/day", set.v),
        ("SIC", "%", set.sic.scaled(100.0)),
    ]
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

/// Writes `metrics.csv`, `monthly.csv`, `report.json` and per-pixel RMSE
/// grids under `out`.
pub fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    create_dir(out)?;
    let path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    let mut emit = |scope: &str, date: Option<NaiveDate>, set: &MetricSet, n: usize, rate: Option<f64>| -> Result<()> {
        for (variable, units, m) in display(set) {
            w.serialize(MetricRow {
                scope,
                date,
                variable,
                units,
                rmse: m.rmse,
                mae: m.mae,
                acc: m.acc,
                valid_pixels: n,
                violation_rate: rate,
            })
            .map_err(|e| csv_error(&path, e))?;
        }
        Ok(())
    };
    emit("pooled", None, &report.pooled, report.valid_pixels, Some(report.violation_rate))?;
    emit("daily_mean", None, &report.daily_mean, report.valid_pixels, None)?;
    for d in &report.days {
        emit("day", Some(d.date), &d.metrics, d.valid_pixels, Some(d.violation_rate))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;

    let path = out.join("monthly.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for m in &report.months {
        for (variable, units, v) in display(&m.metrics) {
            w.serialize(MonthRow {
                year: m.year,
                month: m.month,
                days: m.days,
                variable,
                units,
                rmse: v.rmse,
                mae: v.mae,
                acc: v.acc,
                valid_pixels: m.valid_pixels,
            })
            .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;

    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(&out.join("report.json"), json)?;

    let maps = &report.maps;
    let last = report.days.last().expect("report has days").date;
    for (var, values) in [
        (Variable::SivU, &maps.rmse_u),
        (Variable::SivV, &maps.rmse_v),
        (Variable::Sic, &maps.rmse_sic),
    ] {
        let data: Vec<f32> = values.iter().map(|x| *x as f32).collect();
        let valid = values.iter().map(|x| !x.is_nan()).collect();
        let field = GridField::new(maps.geometry.clone(), var, last, data, valid)?;
        write_grid_file(&field, out.join("maps").join(format!("rmse_{}", var.tag())))?;
    }
    Ok(())
}

/// Evaluates a run's checkpoint on `range` (default: the run's test range).
pub fn cmd_evaluate(
    run_dir: &Path,
    dataset: Option<&Path>,
    range: Option<(NaiveDate, NaiveDate)>,
    out: &Path,
) -> Result<EvalReport> {
    let (resolved, ds) = load_run(run_dir, dataset)?;
    let params = load_checkpoint_expecting(&run_dir.join(CHECKPOINT_FILE), &resolved.model)?;
    let (from, to) = range.unwrap_or((resolved.split.test_start, resolved.split.test_end));
    if from > to {
        return Err(Error::Config(format!("empty date range {from}..={to}")));
    }
    let windows: Vec<SampleWindow> = all_windows(&ds, &resolved.norm, None)?
        .into_iter()
        .filter(|w| (from..=to).contains(&w.date))
        .collect();
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "no admissible dates of {} fall in {from}..={to}",
            ds.root().display()
        )));
    }
    let report = evaluate(&params, &windows, &resolved.norm)?;
    write_report(&report, out)?;
    info!(
        "{} days: SIV RMSE {:.4} km/day, SIC RMSE {:.4}%, violation rate {:.4}",
        report.days.len(),
        report.pooled.siv.rmse,
        100.0 * report.pooled.sic.rmse,
        report.violation_rate
    );
    Ok(report)
}

/// The config a single sweep cell is trained with.
pub fn cell_config(base: &RunConfig, run: &RunSpec, dir: &Path) -> RunConfig {
    let mut c = base.clone();
    c.out = dir.to_path_buf();
    c.seed = run.seed;
    c.split.ratio = run.ratio;
    c.train.lambda_sat = run.weights.lambda_sat;
    c.train.lambda_therm = run.weights.lambda_therm;
    c.train.no_phy = run.kind == ModelKind::NoPhy;
    c
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<ResultRow>> {
    let dataset = Dataset::open(&config.dataset)?;
    let resolved = config.resolve(&dataset)?;
    freeze(&resolved.config, &config.out)?;
    let lambdas = config
        .sweep
        .lambdas
        .iter()
        .map(|[s, t]| LossWeights::new(*s, *t))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        ratios: config.sweep.ratios.clone(),
        lambdas,
        seeds: config.sweep.seeds.clone(),
    };
    let windows = all_windows(&dataset, &resolved.norm, None)?;
    let execute = |run: &RunSpec, dir: &Path| -> Result<RunSummary> {
        let r = cell_config(&resolved.config, run, dir).resolve(&dataset)?;
        let (report, test_set, params) = train_into(&r, &dataset, windows.clone(), dir)?;
        let eval = evaluate(&params, &test_set, &r.norm)?;
        write_report(&eval, &dir.join("eval"))?;
        Ok(RunSummary {
            spec: run.clone(),
            train_windows: report.train_windows,
            log: report.log,
            report: eval,
        })
    };
    run_sweep(&spec, &config.out, config.sweep.workers, execute)
}

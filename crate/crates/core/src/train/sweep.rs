//! PINN versus No-Phy over a grid of sampling ratios, loss weights and
//! seeds. Each cell owns a subdirectory under `runs/`; a cell whose
//! summary already exists is loaded instead of retrained.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{paired_ttest, MetricError};
use super::{EpochLog, EvalReport, Result, TrainError};
use crate::physics::LossWeights;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pinn,
    NoPhy,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Pinn => "pinn",
            ModelKind::NoPhy => "nophy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub id: String,
    pub kind: ModelKind,
    pub ratio: f64,
    pub weights: LossWeights,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    pub lambdas: Vec<LossWeights>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() || self.seeds.is_empty() {
            return Err(TrainError::Config("sweep needs at least one ratio and one seed".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(TrainError::Config(format!("sampling ratio {r} outside (0, 1]")));
        }
        for w in &self.lambdas {
            w.validate()?;
        }
        Ok(())
    }
}

/// For every ratio and seed: one No-Phy run, then one PINN run per weight pair.
pub fn plan_runs(spec: &SweepSpec) -> Vec<RunSpec> {
    let mut runs = Vec::new();
    for &ratio in &spec.ratios {
        for &seed in &spec.seeds {
            runs.push(RunSpec {
                id: format!("nophy-r{ratio}-s{seed}"),
                kind: ModelKind::NoPhy,
                ratio,
                weights: LossWeights::NONE,
                seed,
            });
            for &w in &spec.lambdas {
                runs.push(RunSpec {
                    id: format!("pinn-r{ratio}-ls{}-lt{}-s{seed}", w.lambda_sat, w.lambda_therm),
                    kind: ModelKind::Pinn,
                    ratio,
                    weights: w,
                    seed,
                });
            }
        }
    }
    runs
}

/// What a finished cell leaves behind in `runs/<id>/summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub spec: RunSpec,
    pub train_windows: usize,
    pub log: Vec<EpochLog>,
    pub report: EvalReport,
}

/// One row per run and variable. SIV is in km/day, SIC in percent. `t`
/// and `p` compare a PINN run's daily RMSE with the No-Phy run of the same
/// ratio and seed; they are empty for No-Phy rows and degenerate pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub model: ModelKind,
    pub ratio: f64,
    pub lambda_sat: f64,
    pub lambda_therm: f64,
    pub seed: u64,
    pub variable: String,
    pub rmse: f64,
    pub mae: f64,
    pub acc: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
}

fn io_err(path: &Path, e: impl ToString) -> TrainError {
    TrainError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn load_summary(path: &Path, spec: &RunSpec) -> Option<RunSummary> {
    let text = fs::read_to_string(path).ok()?;
    let s: RunSummary = serde_json::from_str(&text).ok()?;
    (s.spec == *spec).then_some(s)
}

fn build_rows(summaries: &[RunSummary]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for s in summaries {
        let baseline = match s.spec.kind {
            ModelKind::NoPhy => None,
            ModelKind::Pinn => summaries
                .iter()
                .find(|b| b.spec.kind == ModelKind::NoPhy && b.spec.ratio == s.spec.ratio && b.spec.seed == s.spec.seed),
        };
        let r = &s.report;
        let vars = [
            ("SIV", r.pooled.siv, 1.0, r.daily_siv_rmse(), baseline.map(|b| b.report.daily_siv_rmse())),
            ("SIC", r.pooled.sic, 100.0, r.daily_sic_rmse(), baseline.map(|b| b.report.daily_sic_rmse())),
        ];
        for (name, m, scale, ours, theirs) in vars {
            let test = match theirs {
                Some(theirs) => match paired_ttest(&ours, &theirs) {
                    Ok(t) => Some(t),
                    Err(MetricError::Undefined(_)) => None,
                    Err(e) => return Err(e.into()),
                },
                None => None,
            };
            let m = m.scaled(scale);
            rows.push(ResultRow {
                run_id: s.spec.id.clone(),
                model: s.spec.kind,
                ratio: s.spec.ratio,
                lambda_sat: s.spec.weights.lambda_sat,
                lambda_therm: s.spec.weights.lambda_therm,
                seed: s.spec.seed,
                variable: name.to_string(),
                rmse: m.rmse,
                mae: m.mae,
                acc: m.acc,
                t: test.map(|t| t.t),
                p: test.map(|t| t.p),
            });
        }
    }
    Ok(rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Runs every planned cell (at most `workers` at a time), then writes
/// `results.csv` under `out`. `execute` trains and evaluates one cell in
/// the directory it is handed.
pub fn run_sweep<F, E>(spec: &SweepSpec, out: &Path, workers: usize, execute: F) -> std::result::Result<Vec<ResultRow>, E>
where
    F: Fn(&RunSpec, &Path) -> std::result::Result<RunSummary, E> + Sync,
    E: From<TrainError> + Send,
{
    spec.validate()?;
    let runs = plan_runs(spec);
    let slots: Vec<Mutex<Option<RunSummary>>> = runs.iter().map(|_| Mutex::new(None)).collect();
    let failure: Mutex<Option<E>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= runs.len() || failure.lock().expect("lock").is_some() {
            return;
        }
        let run = &runs[i];
        let dir: PathBuf = out.join("runs").join(&run.id);
        let summary_path = dir.join(SUMMARY_FILE);
        let result = match load_summary(&summary_path, run) {
            Some(s) => {
                info!("{}: already complete, skipped", run.id);
                Ok(s)
            }
            None => fs::create_dir_all(&dir)
                .map_err(|e| E::from(io_err(&dir, e)))
                .and_then(|_| execute(run, &dir))
                .and_then(|s| {
                    let json = serde_json::to_string_pretty(&s).expect("summary serializes");
                    fs::write(&summary_path, json).map_err(|e| E::from(io_err(&summary_path, e)))?;
                    Ok(s)
                }),
        };
        match result {
            Ok(s) => *slots[i].lock().expect("lock") = Some(s),
            Err(e) => {
                failure.lock().expect("lock").get_or_insert(e);
                return;
            }
        }
    };
    std::thread::scope(|scope| {
        for _ in 1..workers.max(1) {
            scope.spawn(work);
        }
        work();
    });
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    let summaries: Vec<RunSummary> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("lock").expect("every run completed"))
        .collect();
    let rows = build_rows(&summaries)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_results(&out.join(RESULTS_FILE), &rows)?;
    Ok(rows)
}

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use icepinn_autodiff::Graph;
use log::warn;
use serde::{Deserialize, Serialize};

use super::metrics::{self, MetricError};
use super::{Batch, Result, TrainError};
use crate::data::{NormalizationSpec, SampleWindow};
use crate::grid::{GridGeometry, Variable};
use crate::model::{forward, HisUnetParams};
use crate::physics::{source_term_values, OPEN_WATER_SIC, SOURCE_BOUND};

/// Drift speed above which a prediction in open water counts as moving.
pub const DRIFT_TOLERANCE_KMDAY: f64 = 0.5;

const PREDICT_BATCH: usize = 8;

/// Model output for one target date in physical units. SIC is a fraction
/// and is left unclipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub date: NaiveDate,
    pub geometry: GridGeometry,
    pub u_kmday: Vec<f32>,
    pub v_kmday: Vec<f32>,
    pub sic: Vec<f32>,
}

pub fn predict(params: &HisUnetParams<f32>, windows: &[SampleWindow], norm: &NormalizationSpec) -> Result<Vec<Prediction>> {
    let (ur, vr) = (norm.range(Variable::SivU)?, norm.range(Variable::SivV)?);
    let mut out = Vec::with_capacity(windows.len());
    let mut g = Graph::<f32>::new();
    for chunk in windows.chunks(PREDICT_BATCH) {
        let members: Vec<&SampleWindow> = chunk.iter().collect();
        let batch = Batch::<f32>::assemble(&members)?;
        g.reset();
        let bound = params.bind(&mut g, false);
        let x = g.constant(batch.input);
        let (siv, sic) = forward(&mut g, &bound, x)?;
        let hw = batch.geometry.cells();
        let (siv, sic) = (g.value(siv).data(), g.value(sic).data());
        for (i, w) in chunk.iter().enumerate() {
            let u = &siv[2 * i * hw..(2 * i + 1) * hw];
            let v = &siv[(2 * i + 1) * hw..(2 * i + 2) * hw];
            out.push(Prediction {
                date: w.date,
                geometry: w.geometry.clone(),
                u_kmday: u.iter().map(|x| ur.denormalize(f64::from(*x)) as f32).collect(),
                v_kmday: v.iter().map(|x| vr.denormalize(f64::from(*x)) as f32).collect(),
                sic: sic[i * hw..(i + 1) * hw].to_vec(),
            });
        }
    }
    Ok(out)
}

/// RMSE, MAE and ACC over one evaluation unit. `acc` is `None` when the
/// correlation is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub acc: Option<f64>,
    pub n: usize,
}

impl VariableMetrics {
    fn of(pred: &[f64], obs: &[f64]) -> Result<Self> {
        let acc = match metrics::acc(pred, obs) {
            Ok(a) => Some(a),
            Err(MetricError::Undefined(_)) | Err(MetricError::TooFew { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            rmse: metrics::rmse(pred, obs)?,
            mae: metrics::mae(pred, obs)?,
            acc,
            n: pred.len(),
        })
    }

    /// Component average used for drift.
    fn mean_of(a: &Self, b: &Self) -> Self {
        Self {
            rmse: 0.5 * (a.rmse + b.rmse),
            mae: 0.5 * (a.mae + b.mae),
            acc: a.acc.zip(b.acc).map(|(x, y)| 0.5 * (x + y)),
            n: a.n,
        }
    }

    /// Scales errors for display (fraction to percent); ACC is unitless.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rmse: self.rmse * factor,
            mae: self.mae * factor,
            ..*self
        }
    }
}

/// Metrics for every reported quantity; `siv` averages the `u` and `v`
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub u: VariableMetrics,
    pub v: VariableMetrics,
    pub siv: VariableMetrics,
    pub sic: VariableMetrics,
}

#[derive(Debug, Default)]
struct Pool {
    pu: Vec<f64>,
    ou: Vec<f64>,
    pv: Vec<f64>,
    ov: Vec<f64>,
    pa: Vec<f64>,
    oa: Vec<f64>,
}

impl Pool {
    fn metrics(&self) -> Result<MetricSet> {
        let u = VariableMetrics::of(&self.pu, &self.ou)?;
        let v = VariableMetrics::of(&self.pv, &self.ov)?;
        Ok(MetricSet {
            siv: VariableMetrics::mean_of(&u, &v),
            u,
            v,
            sic: VariableMetrics::of(&self.pa, &self.oa)?,
        })
    }

    fn extend(&mut self, other: &Pool) {
        self.pu.extend(&other.pu);
        self.ou.extend(&other.ou);
        self.pv.extend(&other.pv);
        self.ov.extend(&other.ov);
        self.pa.extend(&other.pa);
        self.oa.extend(&other.oa);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: NaiveDate,
    pub valid_pixels: usize,
    pub metrics: MetricSet,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthReport {
    pub year: i32,
    pub month: u32,
    pub days: usize,
    pub valid_pixels: usize,
    pub metrics: MetricSet,
}

/// Per-pixel RMSE pooled over all evaluated days; NaN where a pixel was
/// never valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMaps {
    pub geometry: GridGeometry,
    pub count: Vec<u32>,
    #[serde(with = "nan_as_null")]
    pub rmse_u: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub rmse_v: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub rmse_siv: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub rmse_sic: Vec<f64>,
}

/// JSON has no NaN; never-valid pixels are stored as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| (!x.is_nan()).then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// All valid pixels of all days pooled.
    pub pooled: MetricSet,
    /// Unweighted mean of the daily metrics.
    pub daily_mean: MetricSet,
    pub days: Vec<DayReport>,
    pub months: Vec<MonthReport>,
    pub maps: PixelMaps,
    /// Fraction of valid pixels with `|S_A| > 1` or drift in predicted open water.
    pub violation_rate: f64,
    pub valid_pixels: usize,
}

impl EvalReport {
    /// Daily SIV RMSE in date order, the series the t-test pairs.
    pub fn daily_siv_rmse(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.metrics.siv.rmse).collect()
    }

    pub fn daily_sic_rmse(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.metrics.sic.rmse).collect()
    }
}

fn mean_metrics(days: &[DayReport], pick: impl Fn(&MetricSet) -> VariableMetrics) -> VariableMetrics {
    let n = days.len() as f64;
    let accs: Option<Vec<f64>> = days.iter().map(|d| pick(&d.metrics).acc).collect();
    VariableMetrics {
        rmse: days.iter().map(|d| pick(&d.metrics).rmse).sum::<f64>() / n,
        mae: days.iter().map(|d| pick(&d.metrics).mae).sum::<f64>() / n,
        acc: accs.map(|a| a.iter().sum::<f64>() / n),
        n: days.iter().map(|d| pick(&d.metrics).n).sum(),
    }
}

/// Counts valid pixels violating either physical constraint.
fn violations(p: &Prediction, w: &SampleWindow) -> Result<usize> {
    let (sa, stencil) = source_term_values(&p.sic, &w.prev_sic, &p.u_kmday, &p.v_kmday, &w.geometry, &w.valid)?;
    let mut count = 0;
    for i in 0..w.cells() {
        if !w.valid[i] {
            continue;
        }
        let source = stencil[i] && sa[i].abs() > SOURCE_BOUND;
        let speed = f64::from(p.u_kmday[i]).hypot(f64::from(p.v_kmday[i]));
        let open_drift = f64::from(p.sic[i]) < OPEN_WATER_SIC && speed > DRIFT_TOLERANCE_KMDAY;
        if source || open_drift {
            count += 1;
        }
    }
    Ok(count)
}

/// Scores predictions against the windows they were made for.
pub fn evaluate_predictions(preds: &[Prediction], windows: &[SampleWindow]) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(TrainError::Config("test set is empty".into()));
    }
    if preds.len() != windows.len() {
        return Err(TrainError::Config(format!(
            "{} predictions for {} windows",
            preds.len(),
            windows.len()
        )));
    }
    let geometry = windows[0].geometry.clone();
    let hw = geometry.cells();
    let mut sq = [vec![0.0f64; hw], vec![0.0; hw], vec![0.0; hw]];
    let mut count = vec![0u32; hw];
    let mut days = Vec::new();
    let mut month_pools: BTreeMap<(i32, u32), (Pool, usize)> = BTreeMap::new();
    let mut total_violations = 0;
    let mut all = Pool::default();
    for (p, w) in preds.iter().zip(windows) {
        if p.date != w.date {
            return Err(TrainError::Config(format!("prediction for {} paired with window {}", p.date, w.date)));
        }
        if !w.geometry.compatible(&geometry) || !p.geometry.compatible(&geometry) {
            return Err(TrainError::Config(format!(
                "{}: grid differs from the first test window ({}x{})",
                w.date, geometry.height, geometry.width
            )));
        }
        let mut pool = Pool::default();
        for i in (0..hw).filter(|&i| w.valid[i]) {
            let (pu, pv, pa) = (f64::from(p.u_kmday[i]), f64::from(p.v_kmday[i]), f64::from(p.sic[i]));
            let (ou, ov) = (f64::from(w.target_siv_kmday[i]), f64::from(w.target_siv_kmday[hw + i]));
            let oa = f64::from(w.target[2 * hw + i]);
            pool.pu.push(pu);
            pool.ou.push(ou);
            pool.pv.push(pv);
            pool.ov.push(ov);
            pool.pa.push(pa);
            pool.oa.push(oa);
            for (acc, d) in sq.iter_mut().zip([pu - ou, pv - ov, pa - oa]) {
                acc[i] += d * d;
            }
            count[i] += 1;
        }
        if pool.pu.is_empty() {
            warn!("{}: no valid pixels, day skipped", w.date);
            continue;
        }
        let v = violations(p, w)?;
        total_violations += v;
        let n = pool.pu.len();
        days.push(DayReport {
            date: w.date,
            valid_pixels: n,
            metrics: pool.metrics()?,
            violation_rate: v as f64 / n as f64,
        });
        all.extend(&pool);
        let entry = month_pools.entry((w.date.year(), w.date.month())).or_default();
        entry.0.extend(&pool);
        entry.1 += 1;
    }
    if days.is_empty() {
        return Err(TrainError::Config("no test window has valid pixels".into()));
    }
    let months = month_pools
        .into_iter()
        .map(|((year, month), (pool, n))| {
            Ok(MonthReport {
                year,
                month,
                days: n,
                valid_pixels: pool.pu.len(),
                metrics: pool.metrics()?,
            })
        })
        .collect::<Result<_>>()?;
    let per_pixel = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(&count)
            .map(|(e, c)| if *c == 0 { f64::NAN } else { (e / f64::from(*c)).sqrt() })
            .collect()
    };
    let (rmse_u, rmse_v) = (per_pixel(&sq[0]), per_pixel(&sq[1]));
    let rmse_siv = rmse_u.iter().zip(&rmse_v).map(|(a, b)| 0.5 * (a + b)).collect();
    let maps = PixelMaps {
        geometry,
        rmse_sic: per_pixel(&sq[2]),
        rmse_u,
        rmse_v,
        rmse_siv,
        count,
    };
    let valid_pixels = all.pu.len();
    Ok(EvalReport {
        pooled: all.metrics()?,
        daily_mean: MetricSet {
            u: mean_metrics(&days, |m| m.u),
            v: mean_metrics(&days, |m| m.v),
            siv: mean_metrics(&days, |m| m.siv),
            sic: mean_metrics(&days, |m| m.sic),
        },
        days,
        months,
        maps,
        violation_rate: total_violations as f64 / valid_pixels as f64,
        valid_pixels,
    })
}

pub fn evaluate(params: &HisUnetParams<f32>, windows: &[SampleWindow], norm: &NormalizationSpec) -> Result<EvalReport> {
    let preds = predict(params, windows, norm)?;
    evaluate_predictions(&preds, windows)
}
